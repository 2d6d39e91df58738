"""Monte Carlo study for a five-dimensional GAM vine.

Each replicate draws a copula family per edge, simulates covariates and a
sample from the true model, then refits it with the oracle estimator (true
family and covariates) and/or the automatic selection estimator. Results are
aggregated into the family-, covariate- and coefficient-level summary tables.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import families as fam
from .gamfit import FitOptions, GamSpec, _independence_fit, fit as gam_fit, link
from .select import STUDY_FAMILIES, SelectionConfig
from .spline import eval_basis
from .vine import EdgeModel, VineModel, fit_sequential, simulate, validate_structure

__all__ = [
    "BETA",
    "STUDY_STRUCTURE",
    "ScenarioConfig",
    "StudyReport",
    "true_smooth",
    "true_eta",
    "generate_replicate",
    "run_replicate",
    "run_study",
]

log = logging.getLogger(__name__)

BETA = np.array([1, 1, -1, 0, 0, 1, -1, -1, 0, 0]) / 4
LINEAR = tuple(f"z{j}" for j in range(1, 11))
SMOOTH = tuple(f"t{k}" for k in range(1, 6))
ACTIVE_LINEAR = ("z1", "z2", "z3", "z6", "z7", "z8")
ACTIVE_SMOOTH = ("t1", "t2", "t3")
FAMILY_CLASSES = ("gaussian", "t", "clayton", "gumbel")
POOL = ("gaussian", "t(nu=4)", "clayton", "gumbel")

STUDY_STRUCTURE = {
    "d": 5,
    "trees": [
        [[1, 2], [1, 3], [3, 4], [3, 5]],
        [
            {"conditioned": [2, 3], "conditioning": [1]},
            {"conditioned": [1, 4], "conditioning": [3]},
            {"conditioned": [1, 5], "conditioning": [3]},
        ],
        [
            {"conditioned": [2, 4], "conditioning": [1, 3]},
            {"conditioned": [4, 5], "conditioning": [1, 3]},
        ],
        [{"conditioned": [2, 5], "conditioning": [1, 3, 4]}],
    ],
}


def true_smooth(k: int, t):
    t = np.asarray(t, dtype=float)
    if k == 1:
        return -0.25 + t / 2
    if k == 2:
        return np.sin(2 * np.pi * t) / 4
    if k == 3:
        return np.sin(6 * np.pi * t) / 4
    return np.zeros_like(t)


def true_eta(w) -> np.ndarray:
    eta = sum(BETA[j] * np.asarray(w[z], dtype=float) for j, z in enumerate(LINEAR))
    for k, t in enumerate(SMOOTH, start=1):
        eta = eta + true_smooth(k, w[t])
    return eta


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 500
    reps: int = 50
    seed: int = 42
    estimator: str = "both"  # oracle | selection | both
    criterion: str = "aic"
    trees: int = 4  # estimate trees 1..trees, the rest as independence
    structure_reuse: str = "per_family"
    alpha: float = 0.05
    selection_families: tuple = STUDY_FAMILIES
    pool: tuple = POOL
    grid_points: int = 101
    threads: int = 1

    def __post_init__(self):
        if self.estimator not in ("oracle", "selection", "both"):
            raise ValueError("estimator must be oracle, selection or both")
        if not 1 <= self.trees <= 4:
            raise ValueError("trees must lie in 1..4")
        if self.n < 60 or self.reps < 1:
            raise ValueError("need n >= 60 and reps >= 1")

    @property
    def estimators(self) -> tuple[str, ...]:
        return ("oracle", "selection") if self.estimator == "both" else (self.estimator,)

    def key(self) -> str:
        """Hash of everything that affects replicate results."""
        d = asdict(self)
        d.pop("reps")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# data generation


def _streams(cfg: ScenarioConfig, rep: int):
    family_ss, data_ss = np.random.SeedSequence([cfg.seed, rep]).spawn(2)
    return np.random.default_rng(family_ss), np.random.default_rng(data_ss)


def _covariates(rng, n):
    w = {}
    for z in LINEAR[:5]:
        w[z] = rng.binomial(1, 0.5, n).astype(float)
    for z in LINEAR[5:]:
        w[z] = rng.standard_normal(n)
    for t in SMOOTH:
        w[t] = rng.uniform(size=n)
    return w


def _draw_family(rng, pool) -> fam.FamilySpec:
    spec = fam.parse_family(pool[rng.integers(len(pool))])
    if spec.family in ("clayton", "gumbel"):
        # tau changes sign with the covariates, so the family switches to a
        # 90 or 270 degree rotation where it is negative
        spec = fam.FamilySpec(spec.family, 0, None, (90, 270)[rng.integers(2)])
    return spec


def generate_replicate(cfg: ScenarioConfig, rep: int):
    """True model and sample ``(u, w)`` for replicate ``rep``."""
    fam_rng, data_rng = _streams(cfg, rep)
    structure = validate_structure(STUDY_STRUCTURE)
    w = _covariates(data_rng, cfg.n)
    edges = []
    for e in structure.edges:
        spec = _draw_family(fam_rng, cfg.pool)
        f = _independence_fit(GamSpec(), spec, cfg.n)
        edges.append(EdgeModel(e, f, tau_fn=lambda ww: link(true_eta(ww))))
    truth = VineModel(structure, edges, tuple(w))
    u = simulate(truth, w, seed=data_rng)
    return truth, (u, w)


# ---------------------------------------------------------------------------
# estimators and per-edge summaries


def _oracle_spec(w):
    return GamSpec.build(w, linear=ACTIVE_LINEAR, smooth=ACTIVE_SMOOTH, basis_size=10, strategy="equidistant")


def _curve(f, name, grid, w):
    spec = f.spec
    sls = spec.slices()
    if name in spec.linear:
        j = int(spec.intercept) + spec.linear.index(name)
        beta = f.theta[j]
        return beta * (grid - float(np.mean(w[name])))
    for k, s in enumerate(spec.smooth):
        if s.name == name:
            return eval_basis(s.basis, grid) @ f.theta[sls[spec.n_linear + k]]
    return np.zeros_like(grid)


def _summarize(f, truth_spec, w, grid):
    spec = f.spec
    beta = []
    for z in LINEAR:
        if z in spec.linear:
            beta.append(float(f.theta[int(spec.intercept) + spec.linear.index(z)]))
        else:
            beta.append(0.0)
    included = {c: (c in spec.covariates) for c in LINEAR + SMOOTH}
    return {
        "family": f.family.family,
        "family_id": f.family.id,
        "true_family": truth_spec.family,
        "beta": beta,
        "included": included,
        "t1_linear": "t1" in spec.linear,
        "basis": {s.name: s.m for s in spec.smooth},
        "edf": float(f.edf_total),
        "converged": bool(f.converged),
        "curves": {t: [float(x) for x in _curve(f, t, grid, w)] for t in SMOOTH},
    }


def run_replicate(cfg: ScenarioConfig, rep: int) -> dict:
    truth, (u, w) = generate_replicate(cfg, rep)
    grid = np.linspace(0, 1, cfg.grid_points)
    true_specs = {em.edge: em.family for em in truth.edges}
    out = {"rep": rep, "truth": [{"edge": em.edge.label, "tree": em.edge.tree, "family": em.family.id}
                                 for em in truth.edges], "estimators": {}}
    sel_cfg = SelectionConfig(
        alpha=cfg.alpha,
        candidate_families=tuple(cfg.selection_families),
        criterion=cfg.criterion,
        structure_reuse=cfg.structure_reuse,
        knot_strategy="equidistant",
    )
    for est in cfg.estimators:
        t0 = time.perf_counter()
        if est == "oracle":
            spec = _oracle_spec(w)

            def fitter(edge, data, spec=spec):
                return gam_fit(spec, true_specs[edge], data, FitOptions()), {"edge": edge.label}

            model = fit_sequential(u, w, truth.structure, sel_cfg, truncate=cfg.trees, fitter=fitter)
        else:
            model = fit_sequential(u, w, truth.structure, sel_cfg, candidates=list(SMOOTH),
                                   linear_candidates=list(LINEAR), truncate=cfg.trees)
        seconds = time.perf_counter() - t0
        edges = []
        for em in model.edges:
            if em.edge.tree > cfg.trees:
                continue
            s = _summarize(em.fit, true_specs[em.edge], w, grid)
            s.update(edge=em.edge.label, tree=em.edge.tree)
            edges.append(s)
        out["estimators"][est] = {"edges": edges, "seconds": seconds}
    return out


def _cached_replicate(args):
    cfg_dict, rep, cache = args
    cfg = ScenarioConfig(**cfg_dict)
    path = None
    if cache:
        path = Path(cache) / cfg.key() / f"rep{rep:04d}.json"
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
    try:
        res = run_replicate(cfg, rep)
    except Exception as exc:  # recorded, not fatal
        log.exception("replicate %d failed", rep)
        return {"rep": rep, "error": f"{type(exc).__name__}: {exc}"}
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(res, fh)
        os.replace(tmp, path)
    return res


def run_study(cfg: ScenarioConfig, out_dir=None, cache_dir=None) -> "StudyReport":
    """Run (or resume from ``cache_dir``) every replicate and aggregate."""
    if cfg.reps >= 500:
        warnings.warn("full-scale study: expect many hours of computation", RuntimeWarning, stacklevel=2)
    cfg_dict = asdict(cfg)
    cfg_dict["selection_families"] = list(cfg.selection_families)
    cfg_dict["pool"] = list(cfg.pool)
    jobs = [(cfg_dict, r, str(cache_dir) if cache_dir else None) for r in range(cfg.reps)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(cfg.threads) as ex:
            results = list(ex.map(_cached_replicate, jobs))
    else:
        results = [_cached_replicate(j) for j in jobs]
    results.sort(key=lambda r: r["rep"])
    report = StudyReport(cfg, results)
    if out_dir is not None:
        report.write(out_dir)
    return report


# ---------------------------------------------------------------------------
# aggregation


def _pct_se(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    p = x.mean()
    return 100 * p, 100 * np.sqrt(p * (1 - p) / x.size)


@dataclass
class StudyReport:
    cfg: ScenarioConfig
    results: list = field(repr=False)

    @property
    def ok(self) -> list:
        return [r for r in self.results if "error" not in r]

    @property
    def failures(self) -> list:
        return [r for r in self.results if "error" in r]

    def _edges(self, est, tree=None):
        out = []
        for r in self.ok:
            for e in r["estimators"].get(est, {}).get("edges", []):
                if tree is None or e["tree"] == tree:
                    out.append(e)
        return out

    @property
    def trees(self):
        return list(range(1, self.cfg.trees + 1))

    def family_accuracy(self, est="selection"):
        """``{tree: (pct, se)}`` of selecting the true family class."""
        return {m: _pct_se([e["family"] == e["true_family"] for e in self._edges(est, m)]) for m in self.trees}

    def contingency(self, tree, est="selection"):
        """Percent of edges by (selected class, true class)."""
        edges = self._edges(est, tree)
        tab = np.zeros((len(FAMILY_CLASSES), len(FAMILY_CLASSES)))
        for e in edges:
            if e["family"] in FAMILY_CLASSES:
                tab[FAMILY_CLASSES.index(e["family"]), FAMILY_CLASSES.index(e["true_family"])] += 1
        return 100 * tab / max(len(edges), 1)

    def covariate_selection(self, est="selection"):
        """``{tree: {"linear": (pct, se), "smooth": (pct, se)}}`` of correct in/exclusion."""
        out = {}
        for m in self.trees:
            lin, smo = [], []
            for e in self._edges(est, m):
                for z in LINEAR:
                    lin.append(e["included"][z] == (z in ACTIVE_LINEAR))
                for t in SMOOTH:
                    smo.append(e["included"][t] == (t in ACTIVE_SMOOTH))
            out[m] = {"linear": _pct_se(lin), "smooth": _pct_se(smo)}
        return out

    def t1_linear(self, est="selection"):
        return {m: _pct_se([e["t1_linear"] for e in self._edges(est, m)]) for m in self.trees}

    def coefficients(self, est):
        """Rows ``(tree, j, truth, mean, q05, q95, rmse)`` for every beta_j."""
        rows = []
        for m in self.trees:
            B = np.array([e["beta"] for e in self._edges(est, m)])
            if B.size == 0:
                continue
            for j in range(10):
                b = B[:, j]
                rows.append((m, j + 1, BETA[j], b.mean(), np.quantile(b, 0.05), np.quantile(b, 0.95),
                             float(np.sqrt(np.mean((b - BETA[j]) ** 2)))))
        return rows

    def mean_abs_active(self, est="selection"):
        """``{tree: (mean |beta_j| over active j, se)}``."""
        idx = [LINEAR.index(z) for z in ACTIVE_LINEAR]
        out = {}
        for m in self.trees:
            B = np.array([e["beta"] for e in self._edges(est, m)])
            if B.size == 0:
                out[m] = (float("nan"), float("nan"))
                continue
            a = np.abs(B[:, idx]).ravel()
            out[m] = (float(a.mean()), float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else float("nan"))
        return out

    def oracle_inactive_zero(self) -> bool:
        idx = [LINEAR.index(z) for z in LINEAR if z not in ACTIVE_LINEAR]
        edges = self._edges("oracle")
        return bool(edges) and all(e["beta"][j] == 0.0 for e in edges for j in idx)

    def curves(self, est):
        grid = np.linspace(0, 1, self.cfg.grid_points)
        rows = []
        for m in self.trees:
            edges = self._edges(est, m)
            if not edges:
                continue
            for k, t in enumerate(SMOOTH, start=1):
                C = np.array([e["curves"][t] for e in edges])
                truth = true_smooth(k, grid)
                for i, g in enumerate(grid):
                    rows.append((m, t, g, truth[i], C[:, i].mean(), np.quantile(C[:, i], 0.05),
                                 np.quantile(C[:, i], 0.95)))
        return rows

    def timings(self):
        out = {}
        for est in self.cfg.estimators:
            s = [r["estimators"][est]["seconds"] for r in self.ok if est in r["estimators"]]
            out[est] = {"mean_seconds": float(np.mean(s)) if s else None,
                        "sd_seconds": float(np.std(s, ddof=1)) if len(s) > 1 else None}
        return out

    def summary(self) -> dict:
        d = {"config": asdict(self.cfg), "replicates": len(self.results), "failures": len(self.failures),
             "failure_messages": [f["error"] for f in self.failures], "timings": self.timings()}
        if "selection" in self.cfg.estimators:
            d["family_accuracy"] = {str(m): v for m, v in self.family_accuracy().items()}
            d["covariate_selection"] = {str(m): v for m, v in self.covariate_selection().items()}
            d["t1_linear"] = {str(m): v for m, v in self.t1_linear().items()}
            d["mean_abs_active"] = {str(m): v for m, v in self.mean_abs_active().items()}
        if "oracle" in self.cfg.estimators:
            d["oracle_inactive_zero"] = self.oracle_inactive_zero()
        return d

    # -- output files --------------------------------------------------------

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        n = self.cfg.n
        cols = [f"T{m}" for m in self.trees]
        sel = "selection" in self.cfg.estimators

        def frame(rows, header, name):
            with open(out / name, "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh)
                wr.writerow(header)
                wr.writerows(rows)

        if sel:
            acc = self.family_accuracy()
            frame([[n, "pct"] + [acc[m][0] for m in self.trees], [n, "se"] + [acc[m][1] for m in self.trees]],
                  ["n", "statistic"] + cols, "table1.csv")
            for name, tree in (("table2.csv", 1), ("table3.csv", self.cfg.trees)):
                tab = self.contingency(tree)
                rows = [[FAMILY_CLASSES[i]] + list(tab[i]) + [tab[i].sum()] for i in range(len(FAMILY_CLASSES))]
                rows.append(["sum"] + list(tab.sum(axis=0)) + [tab.sum()])
                frame(rows, ["selected"] + list(FAMILY_CLASSES) + ["sum"], name)
            cs = self.covariate_selection()
            hdr = ["n", "statistic"] + [f"T{m}_{g}" for m in self.trees for g in ("linear", "smooth")]
            frame([[n, "pct"] + [cs[m][g][0] for m in self.trees for g in ("linear", "smooth")],
                   [n, "se"] + [cs[m][g][1] for m in self.trees for g in ("linear", "smooth")]], hdr, "table4.csv")
            t1 = self.t1_linear()
            frame([[n, "pct"] + [t1[m][0] for m in self.trees], [n, "se"] + [t1[m][1] for m in self.trees]],
                  ["n", "statistic"] + cols, "table5.csv")
        rows = []
        for est in self.cfg.estimators:
            rows += [[est, *r] for r in self.coefficients(est)]
        frame(rows, ["estimator", "tree", "coef", "truth", "mean", "q05", "q95", "rmse"], "coefs.csv")
        rows = []
        for est in self.cfg.estimators:
            rows += [[est, *r] for r in self.curves(est)]
        frame(rows, ["estimator", "tree", "term", "t", "truth", "mean", "q05", "q95"], "curves.csv")
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=1, default=float)
