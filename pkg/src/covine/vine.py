"""Regular vines with GAM pair-copulas: structure, sequential fit, density,
simulation and the Rosenblatt transform.

Variables are labelled ``1..d``. An edge ``(j, k; D)`` evaluates its copula
at ``(u_{j|D}, u_{k|D})``, so ``j`` is always the first argument.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import families as fam
from .gamfit import EdgeData, GamFit, GamSpec, _independence_fit, fit as gam_fit, link_inverse
from .select import SelectionConfig, select_family

__all__ = [
    "Edge",
    "VineStructure",
    "validate_structure",
    "dvine",
    "EdgeModel",
    "VineModel",
    "pseudo_obs",
    "fit_sequential",
    "density",
    "logdensity",
    "simulate",
    "rosenblatt",
    "SCHEMA_VERSION",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Edge:
    tree: int
    conditioned: tuple[int, int]
    conditioning: frozenset
    nodes: tuple = ()  # indices into the previous tree (tree >= 2)

    @property
    def constraint(self) -> frozenset:
        return frozenset(self.conditioned) | self.conditioning

    @property
    def label(self) -> str:
        j, k = self.conditioned
        d = ",".join(str(x) for x in sorted(self.conditioning))
        return f"{j},{k}" + (f";{d}" if d else "")


@dataclass(frozen=True)
class VineStructure:
    d: int
    trees: tuple  # tuple of tuples of Edge

    @property
    def edges(self) -> list[Edge]:
        return [e for tree in self.trees for e in tree]

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "trees": [
                [{"conditioned": list(e.conditioned), "conditioning": sorted(e.conditioning)} for e in tree]
                for tree in self.trees
            ],
        }


class StructureError(ValueError):
    def __init__(self, tree: int, message: str):
        super().__init__(f"tree {tree}: {message}")
        self.tree = tree


def _is_tree(n_nodes: int, pairs) -> bool:
    """True iff ``pairs`` form a spanning tree on nodes ``0..n_nodes-1``."""
    if len(pairs) != n_nodes - 1:
        return False
    parent = list(range(n_nodes))

    def root(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        ra, rb = root(a), root(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def validate_structure(raw) -> VineStructure:
    """Check the R-vine conditions and derive conditioned/conditioning sets.

    ``raw`` is a mapping with ``trees`` (or a list of trees). Tree 1 lists
    variable pairs ``[j, k]``. Later trees list either pairs of indices into
    the previous tree's edge list or ``{"conditioned": [j, k],
    "conditioning": [...]}`` entries.
    """
    if isinstance(raw, VineStructure):
        raw = raw.to_dict()
    trees_raw = raw["trees"] if isinstance(raw, Mapping) else list(raw)
    if not trees_raw:
        raise StructureError(1, "no trees given")
    first = [_entry_pair(x) for x in trees_raw[0]]
    variables = sorted({v for p in first for v in p})
    d = int(raw.get("d", len(variables))) if isinstance(raw, Mapping) else len(variables)
    if variables != list(range(1, d + 1)):
        raise StructureError(1, f"variables must be 1..{d}, got {variables}")
    if len(trees_raw) != d - 1:
        raise StructureError(len(trees_raw), f"expected {d - 1} trees for d={d}, got {len(trees_raw)}")

    t1 = []
    for j, k in first:
        if j == k:
            raise StructureError(1, f"self-loop on variable {j}")
        t1.append(Edge(1, (int(j), int(k)), frozenset()))
    if len(t1) != d - 1:
        raise StructureError(1, f"expected {d - 1} edges, got {len(t1)}")
    if not _is_tree(d, [(j - 1, k - 1) for j, k in first]):
        raise StructureError(1, "edges do not form a spanning tree")
    trees = [tuple(t1)]

    for m in range(2, d):
        prev = trees[-1]
        by_constraint = {e.constraint: i for i, e in enumerate(prev)}
        edges, pairs = [], []
        for x in trees_raw[m - 1]:
            if isinstance(x, Mapping):
                j, k = (int(v) for v in x["conditioned"])
                D = frozenset(int(v) for v in x.get("conditioning", ()))
                a = by_constraint.get(D | {j})
                b = by_constraint.get(D | {k})
                if a is None or b is None:
                    raise StructureError(m, f"edge {j},{k};{sorted(D)} joins no two nodes of tree {m - 1}")
            else:
                a, b = (int(v) for v in x)
                if not (0 <= a < len(prev) and 0 <= b < len(prev)) or a == b:
                    raise StructureError(m, f"invalid node pair {x}")
                j = k = D = None
            ea, eb = prev[a], prev[b]
            if m == 2:
                shared = set(ea.conditioned) & set(eb.conditioned)
            else:
                shared = set(ea.nodes) & set(eb.nodes)
            if not shared:
                raise StructureError(m, f"proximity condition violated by {ea.label} - {eb.label}")
            ua, ub = ea.constraint, eb.constraint
            if len(ua - ub) != 1 or len(ub - ua) != 1:
                raise StructureError(m, f"nodes {ea.label} and {eb.label} do not define a pair-copula")
            if D is None:
                (j,), (k,), D = tuple(ua - ub), tuple(ub - ua), ua & ub
            edges.append(Edge(m, (int(j), int(k)), frozenset(D), (a, b)))
            pairs.append((a, b))
        if len(edges) != d - m:
            raise StructureError(m, f"expected {d - m} edges, got {len(edges)}")
        if not _is_tree(len(prev), pairs):
            raise StructureError(m, "edges do not form a spanning tree on the previous tree's edges")
        trees.append(tuple(edges))
    return VineStructure(d, tuple(trees))


def _entry_pair(x):
    if isinstance(x, Mapping):
        return tuple(int(v) for v in x["conditioned"])
    j, k = x
    return int(j), int(k)


def dvine(d: int) -> VineStructure:
    """D-vine on the path ``1 - 2 - ... - d``."""
    if d < 2:
        raise ValueError("need at least two variables")
    trees = [[[i, i + 1] for i in range(1, d)]]
    for m in range(2, d):
        trees.append([{"conditioned": [i, i + m], "conditioning": list(range(i + 1, i + m))}
                      for i in range(1, d - m + 1)])
    return validate_structure({"d": d, "trees": trees})


# ---------------------------------------------------------------------------
# fitted model


@dataclass
class EdgeModel:
    """A fitted edge. ``tau_fn`` (covariates -> tau) overrides the GAM, which
    lets a known data-generating model be simulated exactly."""

    edge: Edge
    fit: GamFit
    tau_fn: Callable | None = field(default=None, repr=False)

    @classmethod
    def constant(cls, edge: Edge, family, tau: float = 0.0) -> "EdgeModel":
        """Edge with a covariate-free Kendall's tau."""
        spec = fam.parse_family(family)
        f = _independence_fit(GamSpec(), spec, 0)
        if spec.family != "indep":
            f.theta = np.array([float(link_inverse(fam.clip_tau(spec, tau)))])
        return cls(edge, f)

    @property
    def family(self) -> fam.FamilySpec:
        return self.fit.family

    def tau(self, w: Mapping, n: int):
        if self.fit.family.family == "indep":
            return np.zeros(n)
        if self.tau_fn is not None:
            return fam.clip_tau(self.fit.family, np.broadcast_to(self.tau_fn(w), (n,)))
        spec = self.fit.spec
        t = self.fit.predict_tau(w if spec.covariates else {"__n__": np.zeros(n)})
        return fam.clip_tau(self.fit.family, np.broadcast_to(t, (n,)))


@dataclass
class VineModel:
    structure: VineStructure
    edges: list  # EdgeModel in tree order
    covariates: tuple = ()
    truncation: int | None = None
    traces: list = field(default_factory=list, repr=False)

    def edge_models(self, tree: int) -> list[EdgeModel]:
        return [em for em in self.edges if em.edge.tree == tree]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "structure": self.structure.to_dict(),
            "covariates": list(self.covariates),
            "truncation": self.truncation,
            "edges": [
                {"tree": em.edge.tree, "conditioned": list(em.edge.conditioned),
                 "conditioning": sorted(em.edge.conditioning), "fit": em.fit.to_dict()}
                for em in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VineModel":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema_version {version!r}")
        structure = validate_structure(d["structure"])
        fits = {(e["tree"], tuple(e["conditioned"])): GamFit.from_dict(e["fit"]) for e in d["edges"]}
        edges = []
        for e in structure.edges:
            key = (e.tree, e.conditioned)
            if key not in fits:
                raise ValueError(f"model has no fit for edge {e.label}")
            edges.append(EdgeModel(e, fits[key]))
        return cls(structure, edges, tuple(d.get("covariates", ())), d.get("truncation"))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "VineModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# pseudo-observations and the forward cascade


def pseudo_obs(edge_model: EdgeModel, u1, u2, w: Mapping):
    """``(h(u1 | u2), h(u2 | u1))`` with tau evaluated rowwise."""
    u1, u2 = fam.clip_u(u1), fam.clip_u(u2)
    spec = edge_model.family
    if spec.family == "indep":
        return u1.copy(), u2.copy()
    tau = edge_model.tau(w, u1.size)
    return fam.hfunc(spec, 1, u1, u2, tau), fam.hfunc(spec, 2, u1, u2, tau)


def _forward(model: VineModel, u: np.ndarray, w: Mapping, want_logc=True):
    """Pseudo-observations ``u_{x|S}`` keyed by ``(x, S)`` plus per-edge log c."""
    n = u.shape[0]
    pobs = {(x, frozenset()): fam.clip_u(u[:, x - 1]) for x in range(1, model.structure.d + 1)}
    logc = {}
    for em in model.edges:
        e = em.edge
        j, k = e.conditioned
        a, b = pobs[(j, e.conditioning)], pobs[(k, e.conditioning)]
        spec = em.family
        if spec.family == "indep":
            if want_logc:
                logc[e] = np.zeros(n)
            h1, h2 = a, b
        else:
            tau = em.tau(w, n)
            if want_logc:
                logc[e] = fam.prepare(spec, a, b).loglik(tau)
            h1, h2 = fam.hfunc(spec, 1, a, b, tau), fam.hfunc(spec, 2, a, b, tau)
        pobs[(j, e.conditioning | {k})] = h1
        pobs[(k, e.conditioning | {j})] = h2
    return pobs, logc


def _check_u(model: VineModel, u) -> np.ndarray:
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != model.structure.d:
        raise ValueError(f"expected {model.structure.d} columns, got {u.shape[1]}")
    return u


def logdensity(model: VineModel, u, w: Mapping | None = None) -> np.ndarray:
    u = _check_u(model, u)
    _, logc = _forward(model, u, w or {})
    return np.sum([logc[em.edge] for em in model.edges], axis=0) if logc else np.zeros(u.shape[0])


def density(model: VineModel, u, w: Mapping | None = None):
    """Joint copula density and its log, rowwise."""
    ld = logdensity(model, u, w)
    return np.exp(ld), ld


# ---------------------------------------------------------------------------
# sampling order and inverse Rosenblatt


def _sampling_order(structure: VineStructure):
    """Order ``o_1..o_d`` with, for each ``o_i``, its edges to earlier variables.

    Peels off a conditioned variable of the top remaining edge; it occurs in
    no conditioning set, so removing its edges leaves a regular vine.
    """
    remaining = [list(t) for t in structure.trees]
    peeled = []
    live = set(range(1, structure.d + 1))
    while len(live) > 1:
        top = next(t for t in reversed(remaining) if t)
        x = max(top[0].conditioned)
        touching = [e for t in remaining for e in t if x in e.conditioned]
        peeled.append((x, sorted(touching, key=lambda e: e.tree)))
        remaining = [[e for e in t if x not in e.conditioned] for t in remaining]
        live.discard(x)
    peeled.append((live.pop(), []))
    return peeled[::-1]


def rosenblatt(model: VineModel, u, w: Mapping | None = None) -> np.ndarray:
    """Map a sample to independent uniforms (columns in variable order)."""
    u = _check_u(model, u)
    pobs, _ = _forward(model, u, w or {}, want_logc=False)
    out = np.empty_like(u)
    for x, edges in _sampling_order(model.structure):
        if not edges:
            out[:, x - 1] = fam.clip_u(u[:, x - 1])
            continue
        e = edges[-1]
        other = e.conditioned[1] if e.conditioned[0] == x else e.conditioned[0]
        out[:, x - 1] = pobs[(x, e.conditioning | {other})]
    return out


def simulate(model: VineModel, w: Mapping | None = None, n: int | None = None, seed=None) -> np.ndarray:
    """Inverse-Rosenblatt sample, one row per covariate row (or ``n`` rows)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = w or {}
    if n is None:
        lens = {np.atleast_1d(v).size for v in w.values()}
        if len(lens) != 1:
            raise ValueError("give n or covariate columns of one common length")
        n = lens.pop()
    d = model.structure.d
    order = _sampling_order(model.structure)
    p = rng.uniform(size=(n, d))
    by_edge = {em.edge: em for em in model.edges}
    taus = {em.edge: (None if em.family.family == "indep" else em.tau(w, n)) for em in model.edges}
    pobs = {}
    u = np.empty((n, d))
    for i, (x, edges) in enumerate(order):
        v = fam.clip_u(p[:, i])
        for e in reversed(edges):
            em = by_edge[e]
            j, k = e.conditioned
            other = k if j == x else j
            cond = pobs[(other, e.conditioning)]
            if taus[e] is not None:
                v = fam.hinv(em.family, 1 if j == x else 2, v, cond, taus[e])
        u[:, x - 1] = v
        pobs[(x, frozenset())] = v
        # pseudo-observations of every edge now fully inside the sampled set
        for em in model.edges:
            e = em.edge
            j, k = e.conditioned
            if (j, e.conditioning | {k}) in pobs:
                continue
            if (j, e.conditioning) in pobs and (k, e.conditioning) in pobs:
                a, b = pobs[(j, e.conditioning)], pobs[(k, e.conditioning)]
                if taus[e] is None:
                    h1, h2 = a, b
                else:
                    h1 = fam.hfunc(em.family, 1, a, b, taus[e])
                    h2 = fam.hfunc(em.family, 2, a, b, taus[e])
                pobs[(j, e.conditioning | {k})] = h1
                pobs[(k, e.conditioning | {j})] = h2
    return u


# ---------------------------------------------------------------------------
# sequential estimation


EdgeFitter = Callable[[Edge, EdgeData], "tuple[GamFit, dict]"]


def _select_fitter(cfg: SelectionConfig, candidates, linear_candidates):
    def fitter(edge: Edge, data: EdgeData):
        sel = select_family(data, candidates, cfg, linear_candidates)
        trace = {"edge": edge.label, "tree": edge.tree, **sel.to_dict()}
        return sel.fit, trace

    return fitter


def fit_sequential(u, w: Mapping | None = None, structure: VineStructure | None = None,
                   cfg: SelectionConfig | None = None, candidates=None, linear_candidates=(),
                   truncate: int | None = None, fitter: EdgeFitter | None = None,
                   threads: int = 1) -> VineModel:
    """Tree-by-tree estimation with pseudo-observations passed upward.

    Without ``structure`` a D-vine in column order is used. ``candidates``
    defaults to every covariate as a smooth candidate. ``fitter`` replaces
    the family/covariate selection (e.g. with a known specification).
    Trees above ``truncate`` are set to independence.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    n, d = u.shape
    if np.any(~np.isfinite(u)) or np.any((u <= 0) | (u >= 1)):
        raise ValueError("copula data must lie strictly inside (0, 1)")
    w = dict(w or {})
    structure = structure or dvine(d)
    if structure.d != d:
        raise ValueError(f"structure has d={structure.d} but data has {d} columns")
    cfg = cfg or SelectionConfig()
    if candidates is None:
        candidates = [k for k in w if k not in set(linear_candidates)]
    q = d - 1 if truncate is None else int(truncate)
    if not 0 <= q <= d - 1:
        raise ValueError(f"truncate must lie in [0, {d - 1}]")
    fitter = fitter or _select_fitter(cfg, list(candidates), list(linear_candidates))

    pobs = {(x, frozenset()): fam.clip_u(u[:, x - 1]) for x in range(1, d + 1)}
    edges, traces = [], []
    for m, tree in enumerate(structure.trees, start=1):
        def work(e: Edge):
            j, k = e.conditioned
            data = EdgeData(pobs[(j, e.conditioning)], pobs[(k, e.conditioning)], w)
            if m > q:
                f = gam_fit(GamSpec(), fam.FamilySpec("indep"), data)
                return f, {"edge": e.label, "tree": m, "truncated": True}
            try:
                return fitter(e, data)
            except Exception as exc:  # never abort the whole vine
                log.warning("edge %s failed (%s); using independence", e.label, exc)
                f = gam_fit(GamSpec(), fam.FamilySpec("indep"), data)
                f.diagnostics.append(f"edge fit failed: {exc}")
                return f, {"edge": e.label, "tree": m, "error": str(exc)}

        if threads > 1 and len(tree) > 1:
            with ThreadPoolExecutor(threads) as ex:
                results = list(ex.map(work, tree))
        else:
            results = [work(e) for e in tree]
        for e, (f, trace) in zip(tree, results):
            em = EdgeModel(e, f)
            edges.append(em)
            traces.append(trace)
            log.info("tree %d edge %s: %s", m, e.label, f.family.id)
            if m < d - 1:
                j, k = e.conditioned
                h1, h2 = pseudo_obs(em, pobs[(j, e.conditioning)], pobs[(k, e.conditioning)], w)
                pobs[(j, e.conditioning | {k})] = h1
                pobs[(k, e.conditioning | {j})] = h2
    return VineModel(structure, edges, tuple(w), None if truncate is None else q, traces)
