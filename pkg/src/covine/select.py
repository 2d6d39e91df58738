"""Covariate / basis-size selection for one edge and AIC/BIC family choice."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import families as fam
from .gamfit import EdgeData, FitOptions, GamFit, GamSpec, fit

__all__ = [
    "SelectionConfig",
    "EdgeSelection",
    "DEFAULT_FAMILIES",
    "STUDY_FAMILIES",
    "candidate_families",
    "select_gam_structure",
    "select_family",
]

log = logging.getLogger(__name__)

DEFAULT_FAMILIES = (
    "indep",
    "gaussian",
    "t",
    "clayton",
    "clayton@90",
    "clayton@270",
    "gumbel",
    "gumbel@90",
    "gumbel@270",
)
# the six candidates of the simulation study: Archimedean families switch to
# a 90 or 270 degree rotation where tau < 0
STUDY_FAMILIES = ("gaussian", "t", "clayton@0/90", "clayton@0/270", "gumbel@0/90", "gumbel@0/270")


@dataclass(frozen=True)
class SelectionConfig:
    alpha: float = 0.05
    candidate_families: tuple = DEFAULT_FAMILIES
    criterion: str = "aic"
    edf_linear_threshold: float = 1.5
    edf_growth_fraction: float = 0.8
    max_basis_fraction_n: float = 1 / 30
    max_basis_fraction_unique: float = 1 / 2
    initial_basis: int = 10
    structure_reuse: str = "per_family"
    knot_strategy: str = "quantile"
    nu_grid: tuple = fam.NU_GRID
    sign_gate: float = 0.05
    # "capped": grow while EDF > 0.8 basis and the doubled basis respects
    # both caps; "coupled": grow while EDF > 0.8 basis, doubling would exceed
    # unique/2 and every basis is below n/30
    basis_rule: str = "capped"
    fit_options: FitOptions = field(default_factory=FitOptions)
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("edf_linear_threshold", "edf_growth_fraction", "max_basis_fraction_n",
                     "max_basis_fraction_unique"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.initial_basis < 3:
            raise ValueError("initial_basis must be at least 3")
        if self.criterion not in ("aic", "bic"):
            raise ValueError("criterion must be 'aic' or 'bic'")
        if self.structure_reuse not in ("per_family", "first_family_only"):
            raise ValueError("structure_reuse must be 'per_family' or 'first_family_only'")
        if self.basis_rule not in ("capped", "coupled"):
            raise ValueError("basis_rule must be 'capped' or 'coupled'")
        if not self.candidate_families:
            raise ValueError("candidate_families is empty")


@dataclass
class EdgeSelection:
    chosen_family: fam.FamilySpec
    chosen_spec: GamSpec
    fit: GamFit
    history: list = field(default_factory=list)
    criteria: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "chosen_family": self.chosen_family.id,
            "criteria": dict(self.criteria),
            "history": self.history,
            "diagnostics": list(self.diagnostics),
        }


# ---------------------------------------------------------------------------
# structure selection for a known family


def _n_unique(x) -> int:
    return int(np.unique(np.asarray(x)).size)


def _basis_cap(cfg: SelectionConfig, n: int, n_unique: int, size: int) -> bool:
    return size <= cfg.max_basis_fraction_n * n and size < cfg.max_basis_fraction_unique * n_unique


def _build(data: EdgeData, linear, basis, cfg):
    return GamSpec.build(data.w, linear=tuple(linear), smooth=tuple(basis), basis_size=dict(basis),
                         strategy=cfg.knot_strategy)


def _record(fit_: GamFit, family, phase):
    return {
        "event": "fit",
        "phase": phase,
        "family": family.id,
        "terms": fit_.term_names,
        "basis": {s.name: s.m for s in fit_.spec.smooth},
        "pvalues": [float(p) for p in fit_.pvalues],
        "edf": [float(e) for e in fit_.edf_terms],
        "converged": fit_.converged,
    }


def select_gam_structure(data: EdgeData, family, candidates, cfg: SelectionConfig | None = None,
                         linear_candidates=()):
    """Backward elimination and basis-size growth for one family.

    ``candidates`` start as smooth terms. ``linear_candidates`` enter as
    linear terms and are only tested for significance. A smooth candidate
    with too few distinct values for the initial basis is treated as linear.

    Returns ``(spec, fit, history)``.
    """
    cfg = cfg or SelectionConfig()
    family = fam.parse_family(family)
    n = data.n
    history = []
    linear = list(linear_candidates)
    basis = {}
    for name in candidates:
        if name in linear:
            continue
        if _n_unique(data.w[name]) * cfg.max_basis_fraction_unique <= cfg.initial_basis:
            linear.append(name)
            history.append({"event": "as_linear", "term": name, "reason": "too few distinct values"})
        else:
            basis[name] = cfg.initial_basis

    # phase 1: drop insignificant terms, move near-linear smooths to the linear part
    while True:
        spec = _build(data, linear, basis, cfg)
        f = fit(spec, family, data, cfg.fit_options)
        history.append(_record(f, family, 1))
        if not (linear or basis):
            break
        pv = np.asarray(f.pvalues, dtype=float)
        if not f.converged:
            history.append({"event": "nonconverged", "note": "p-values treated as >= alpha"})
            pv = np.ones_like(pv)
        names = spec.term_names
        off = int(spec.intercept)
        changed = False
        keep_lin = []
        for j, name in enumerate(spec.linear):
            p = pv[off + j]
            if not p < cfg.alpha:
                history.append({"event": "drop", "term": name, "pvalue": float(p)})
                changed = True
            else:
                keep_lin.append(name)
        keep_smooth = {}
        for k, s in enumerate(spec.smooth):
            j = spec.n_linear + k
            p, e = pv[j], f.edf_terms[j]
            if not p < cfg.alpha:
                history.append({"event": "drop", "term": names[j], "pvalue": float(p)})
                changed = True
            elif e <= cfg.edf_linear_threshold:
                history.append({"event": "to_linear", "term": s.name, "edf": float(e)})
                keep_lin.append(s.name)
                changed = True
            else:
                keep_smooth[s.name] = basis[s.name]
        linear, basis = keep_lin, keep_smooth
        if not changed:
            break

    # phase 2: grow bases whose EDF is close to the upper limit
    if basis:
        uniq = {k: _n_unique(data.w[k]) for k in basis}
        while True:
            grow = []
            for k, s in enumerate(spec.smooth):
                e = f.edf_terms[spec.n_linear + k]
                b = basis[s.name]
                big = e > cfg.edf_growth_fraction * b
                if cfg.basis_rule == "capped":
                    ok = big and _basis_cap(cfg, n, uniq[s.name], 2 * b)
                else:
                    ok = big and 2 * b > uniq[s.name] and all(v < n * cfg.max_basis_fraction_n for v in basis.values())
                if ok:
                    grow.append(s.name)
            if not grow:
                break
            new_basis = {k: (2 * v if k in grow else v) for k, v in basis.items()}
            new_spec = _build(data, linear, new_basis, cfg)
            new_fit = fit(new_spec, family, data, cfg.fit_options)
            history.append({"event": "grow", "terms": grow, "basis": new_basis})
            history.append(_record(new_fit, family, 2))
            pv = np.asarray(new_fit.pvalues)
            if not new_fit.converged or np.any(pv[int(new_spec.intercept):] >= cfg.alpha):
                # keep every surviving term significant: reject this growth
                history.append({"event": "grow_rejected", "terms": grow})
                break
            basis, spec, f = new_basis, new_spec, new_fit
    return spec, f, history


# ---------------------------------------------------------------------------
# family selection


def candidate_families(data: EdgeData, cfg: SelectionConfig) -> list[fam.FamilySpec]:
    """Candidate specs after sign-gating fixed rotations of Archimedean families."""
    specs = [fam.parse_family(c) for c in cfg.candidate_families]
    needs_gate = any(s.family in ("clayton", "gumbel") and not s.switching for s in specs)
    tau = stats.kendalltau(data.u1, data.u2)[0] if needs_gate else 0.0
    if not np.isfinite(tau):
        tau = 0.0
    out = []
    for s in specs:
        if s.family in ("clayton", "gumbel") and not s.switching:
            positive = s.rotation in (0, 180)
            if positive and tau < -cfg.sign_gate:
                continue
            if not positive and tau > cfg.sign_gate:
                continue
        out.append(s)
    return out


def _criterion(f: GamFit, cfg):
    return f.aic if cfg.criterion == "aic" else f.bic


def _profile_nu(data, spec, cfg, base_fit: GamFit | None = None):
    """Best nu on the grid for a fixed structure (same df, so max loglik)."""
    best = base_fit
    for nu in cfg.nu_grid:
        if best is not None and best.family.nu == nu:
            continue
        f = fit(spec, fam.FamilySpec("t", nu=nu), data, cfg.fit_options)
        if best is None or (f.converged and (not best.converged or f.loglik > best.loglik)):
            best = f
    return best


def _start_nu(data, cfg):
    """nu of the best intercept-only t fit, used while the structure is selected."""
    f = _profile_nu(data, GamSpec(), cfg)
    return f.family.nu


def _select_one(data, family, candidates, linear_candidates, cfg, reuse_spec=None):
    history = []
    if family.family == "indep":
        f = fit(GamSpec(), family, data, cfg.fit_options)
        return f, history
    if family.family == "t" and family.nu is None:
        if reuse_spec is None:
            nu0 = _start_nu(data, cfg)
            spec, f0, history = select_gam_structure(data, fam.FamilySpec("t", nu=nu0), candidates, cfg,
                                                     linear_candidates)
        else:
            spec, f0 = reuse_spec, None
        f = _profile_nu(data, spec, cfg, f0)
        history.append({"event": "nu_profile", "nu": f.family.nu})
        return f, history
    if reuse_spec is not None:
        f = fit(reuse_spec, family, data, cfg.fit_options)
        return f, [_record(f, family, "reuse")]
    _, f, history = select_gam_structure(data, family, candidates, cfg, linear_candidates)
    return f, history


def _sort_key(f: GamFit, cfg):
    crit = _criterion(f, cfg)
    return (round(crit, 9), round(f.edf_total + f.family.n_aux, 9), f.family.id)


def select_family(data: EdgeData, candidates=(), cfg: SelectionConfig | None = None,
                  linear_candidates=()) -> EdgeSelection:
    """Select covariates per candidate family and keep the best criterion.

    Ties on the criterion go to the family with fewer effective parameters,
    then to the lexicographically smaller id.
    """
    cfg = cfg or SelectionConfig()
    specs = candidate_families(data, cfg)
    diagnostics = []
    history = []
    fits = {}

    reuse_spec = None
    order = list(specs)
    if cfg.structure_reuse == "first_family_only":
        first = next((s for s in order if s.family != "indep"), None)
        if first is not None:
            f, h = _select_one(data, first, candidates, linear_candidates, cfg)
            fits[first.id], reuse_spec = f, f.spec
            history.extend(h)
            order = [s for s in order if s is not first]

    def run(s):
        try:
            return s, _select_one(data, s, candidates, linear_candidates, cfg, reuse_spec)
        except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            return s, exc

    if cfg.threads > 1 and len(order) > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            results = list(ex.map(run, order))
    else:
        results = [run(s) for s in order]
    for s, res in results:
        if isinstance(res, Exception):
            diagnostics.append(f"{s.id}: {res}")
            continue
        f, h = res
        fits[s.id] = f
        history.extend(h)

    criteria = {}
    for key, f in fits.items():
        criteria[key] = {"family": f.family.id, "criterion": _criterion(f, cfg), "aic": f.aic, "bic": f.bic,
                         "edf": f.edf_total, "loglik": f.loglik, "converged": f.converged}
    ok = [f for f in fits.values() if f.converged]
    if not ok:
        diagnostics.append("no candidate family converged; independence fallback")
        best = fit(GamSpec(), fam.FamilySpec("indep"), data, cfg.fit_options)
    else:
        best = min(ok, key=lambda f: _sort_key(f, cfg))
    history.append({"event": "family_choice", "chosen": best.family.id,
                    "criteria": {k: v["criterion"] for k, v in criteria.items()}})
    return EdgeSelection(best.family, best.spec, best, history, criteria, diagnostics)
