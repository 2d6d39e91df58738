"""Penalized likelihood fit of a pair-copula whose Kendall's tau is a GAM.

The model is ``tau(w) = g(z' beta + sum_k s_k(t_k))`` with the inverse Fisher
z link ``g(x) = (e^x - 1) / (e^x + 1)``. Smooth terms are natural cubic
splines in cardinal form, each centered over the training data so that the
single global intercept is identified.

The log-likelihood is the average ``n^-1 sum log c``, so the working weights
``a`` carry a factor ``1/n`` and the ridge system reads
``(d' a d + p(gamma)) theta = d' a y`` with ``p(gamma)`` on the same scale.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import linalg, optimize, stats

from . import families as fam
from .spline import KnotSequence, SplineBasis, build_basis, eval_basis, place_knots

__all__ = [
    "link",
    "link_inverse",
    "SmoothTerm",
    "GamSpec",
    "EdgeData",
    "WorkingQuantities",
    "FitOptions",
    "GamFit",
    "linear_predictor",
    "predict_tau",
    "penalized_loglik",
    "working_quantities",
    "ridge_step",
    "edf",
    "gcv",
    "fit",
    "wald_pvalues",
    "penalized_score",
]

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-6
INTERCEPT = "(Intercept)"


def link(eta):
    """Inverse Fisher z-transform, ``tanh(eta / 2)``."""
    return np.tanh(np.asarray(eta, dtype=float) / 2)


def link_inverse(tau):
    return 2 * np.arctanh(np.asarray(tau, dtype=float))


def _link_derivs(eta):
    g = np.tanh(eta / 2)
    g1 = (1 - g * g) / 2
    return g, g1, -g * g1


# ---------------------------------------------------------------------------
# model specification


@dataclass(frozen=True)
class SmoothTerm:
    name: str
    basis: SplineBasis

    @property
    def m(self) -> int:
        return self.basis.m


@dataclass(frozen=True)
class GamSpec:
    """Linear terms (plus optional intercept) followed by smooth terms.

    The coefficient vector stacks the intercept, the linear coefficients and
    then the knot values of each smooth, so ``p = P + sum_k m_k``.
    """

    linear: tuple[str, ...] = ()
    smooth: tuple[SmoothTerm, ...] = ()
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "linear", tuple(self.linear))
        object.__setattr__(self, "smooth", tuple(self.smooth))
        names = list(self.linear) + [s.name for s in self.smooth]
        dup = {x for x in names if names.count(x) > 1}
        if dup:
            raise ValueError(f"covariates appear more than once: {sorted(dup)}")

    @classmethod
    def build(cls, w: Mapping, linear=(), smooth=(), basis_size=10, strategy="quantile", intercept=True):
        """Spec with knots placed on the observed covariates.

        ``basis_size`` is an int or a mapping from smooth name to size.
        """
        terms = []
        for name in smooth:
            m = basis_size[name] if isinstance(basis_size, Mapping) else basis_size
            knots = place_knots(_column(w, name), m, strategy, name=name)
            terms.append(SmoothTerm(name, build_basis(knots)))
        return cls(tuple(linear), tuple(terms), intercept)

    @property
    def n_linear(self) -> int:
        return int(self.intercept) + len(self.linear)

    @property
    def p(self) -> int:
        return self.n_linear + sum(s.m for s in self.smooth)

    @property
    def covariates(self) -> tuple[str, ...]:
        return self.linear + tuple(s.name for s in self.smooth)

    @property
    def term_names(self) -> list[str]:
        head = [INTERCEPT] if self.intercept else []
        return head + list(self.linear) + [f"s({s.name})" for s in self.smooth]

    def slices(self) -> list[slice]:
        """Coefficient slice of every term, in ``term_names`` order."""
        out = [slice(i, i + 1) for i in range(self.n_linear)]
        k = self.n_linear
        for s in self.smooth:
            out.append(slice(k, k + s.m))
            k += s.m
        return out

    def design(self, w: Mapping) -> np.ndarray:
        n = _nrows(w, self.covariates)
        cols = []
        if self.intercept:
            cols.append(np.ones((n, 1)))
        for name in self.linear:
            cols.append(_column(w, name).reshape(-1, 1))
        for s in self.smooth:
            cols.append(eval_basis(s.basis, _column(w, s.name)).reshape(n, s.m))
        if not cols:
            return np.zeros((n, 0))
        return np.hstack(cols)

    def penalty(self, gamma) -> np.ndarray:
        gamma = _gamma_vector(gamma, len(self.smooth))
        P = np.zeros((self.p, self.p))
        for g, s, sl in zip(gamma, self.smooth, self.slices()[self.n_linear:]):
            P[sl, sl] = g * s.basis.penalty
        return P

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "linear": list(self.linear),
            "smooth": [
                {"name": s.name, "knots": list(s.basis.knots.knots), "support": list(s.basis.knots.support)}
                for s in self.smooth
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GamSpec":
        terms = tuple(
            SmoothTerm(t["name"], build_basis(KnotSequence.from_array(t["knots"], t["support"])))
            for t in d.get("smooth", [])
        )
        return cls(tuple(d.get("linear", [])), terms, bool(d.get("intercept", True)))


def _column(w: Mapping, name: str) -> np.ndarray:
    try:
        x = w[name]
    except (KeyError, IndexError, ValueError):
        raise ValueError(f"missing covariate {name!r}") from None
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite values in covariate {name!r}")
    return x


def _nrows(w: Mapping, names) -> int:
    for name in names:
        return _column(w, name).size
    # intercept-only: infer from any column
    for v in (w.values() if hasattr(w, "values") else []):
        return np.atleast_1d(v).size
    return 1


def _gamma_vector(gamma, k):
    if gamma is None:
        return np.zeros(k)
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if g.size == 1 and k != 1:
        g = np.full(k, g.item())
    if g.size != k:
        raise ValueError(f"expected {k} smoothing parameters, got {g.size}")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("smoothing parameters must be finite and >= 0")
    return g


@dataclass(frozen=True)
class EdgeData:
    """Copula-scale pair ``(u1, u2)`` with covariates aligned by row."""

    u1: np.ndarray
    u2: np.ndarray
    w: Mapping = field(default_factory=dict)

    def __post_init__(self):
        u1 = np.asarray(self.u1, dtype=float).ravel()
        u2 = np.asarray(self.u2, dtype=float).ravel()
        if u1.size != u2.size:
            raise ValueError("u1 and u2 differ in length")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)

    @property
    def n(self) -> int:
        return self.u1.size


# ---------------------------------------------------------------------------
# prediction


def linear_predictor(spec: GamSpec, theta, w: Mapping):
    theta = np.asarray(theta, dtype=float)
    if theta.size != spec.p:
        raise ValueError(f"theta has length {theta.size}, spec expects {spec.p}")
    scalar = all(np.ndim(w[c]) == 0 for c in spec.covariates if c in w)
    eta = spec.design(w) @ theta
    return eta[0] if scalar and eta.size == 1 else eta


def predict_tau(spec: GamSpec, theta, w: Mapping):
    return link(linear_predictor(spec, theta, w))


# ---------------------------------------------------------------------------
# centered design


@dataclass
class _Design:
    X: np.ndarray  # n x q constrained design
    C: np.ndarray  # p x q, theta_full = C @ theta_red
    blocks: list  # (reduced slice, Z' S Z, scale) per smooth
    raw_blocks: list  # full-coordinate basis block per smooth


def _build_design(spec: GamSpec, w: Mapping) -> _Design:
    Xf = spec.design(w)
    n = Xf.shape[0]
    P = spec.n_linear
    q = P + sum(s.m - 1 for s in spec.smooth)
    C = np.zeros((spec.p, q))
    C[:P, :P] = np.eye(P)
    X = np.empty((n, q))
    X[:, :P] = Xf[:, :P]
    blocks, raw = [], []
    kf, kr = P, P
    for s in spec.smooth:
        B = Xf[:, kf:kf + s.m]
        # orthonormal basis of coefficient vectors with sum_i s(t_i) = 0
        Z = linalg.null_space(B.sum(axis=0, keepdims=True))
        C[kf:kf + s.m, kr:kr + s.m - 1] = Z
        Xk = B @ Z
        X[:, kr:kr + s.m - 1] = Xk
        Sk = Z.T @ s.basis.penalty @ Z
        Sk = 0.5 * (Sk + Sk.T)
        scale = (np.sum(Xk * Xk) / n) / max(np.linalg.norm(Sk), 1e-300)
        blocks.append((slice(kr, kr + s.m - 1), Sk, scale))
        raw.append(B)
        kf += s.m
        kr += s.m - 1
    return _Design(X, C, blocks, raw)


# ---------------------------------------------------------------------------
# working quantities and the generalized ridge step


@dataclass
class WorkingQuantities:
    """Fisher-scoring linearization ``y = d theta + a^-1 dl/deta``.

    ``penalty_blocks`` lists ``(slice, S_k)`` so that
    ``p(gamma) = blockdiag(0, gamma_k S_k)`` in the coordinates of ``d``.
    """

    y: np.ndarray
    d: np.ndarray
    a: np.ndarray
    penalty_blocks: tuple = ()
    constraint: np.ndarray | None = None
    n_floored: int = 0

    def penalty(self, gamma) -> np.ndarray:
        gamma = _gamma_vector(gamma, len(self.penalty_blocks))
        q = self.d.shape[1]
        P = np.zeros((q, q))
        for g, (sl, S) in zip(gamma, self.penalty_blocks):
            P[sl, sl] += g * S
        return P


def _working(prep, X, theta_red, n, weights):
    eta = X @ theta_red
    tau, g1, g2 = _link_derivs(eta)
    ll, d1, d2 = prep.derivs(tau)
    score = d1 * g1
    if weights == "expected":
        w = fam.fisher_info(prep.spec, tau) * g1 * g1
    elif weights == "observed":
        w = -(d2 * g1 * g1 + d1 * g2)
    else:
        raise ValueError(f"unknown weights {weights!r}")
    w = np.where(np.isfinite(w), w, WEIGHT_FLOOR)
    floored = int(np.sum(w < WEIGHT_FLOOR))
    w = np.maximum(w, WEIGHT_FLOOR)
    y = eta + score / w
    return y, w / n, ll, floored


def working_quantities(spec: GamSpec, family, data: EdgeData, theta, weights="expected") -> WorkingQuantities:
    """Working response, centered design and weights at ``theta``.

    ``d`` is the centered design, related to the full coefficients by
    ``theta_full = constraint @ theta_d``.
    """
    family = fam.parse_family(family)
    D = _build_design(spec, data.w if spec.covariates else _nobs(data))
    theta_red = D.C.T @ np.asarray(theta, dtype=float)
    prep = fam.prepare(family, data.u1, data.u2)
    y, a, _, floored = _working(prep, D.X, theta_red, data.n, weights)
    return WorkingQuantities(
        y=y, d=D.X, a=a, penalty_blocks=tuple((sl, S) for sl, S, _ in D.blocks), constraint=D.C, n_floored=floored
    )


def _nobs(data: EdgeData):
    return {"__n__": np.zeros(data.n)}


class _Ridge:
    """Normal equations of the ridge problem with cached cross-products."""

    def __init__(self, X, a, y, blocks):
        aX = X * a[:, None]
        self.H = X.T @ aX
        self.b = aX.T @ y
        self.yay = float(np.sum(a * y * y))
        self.n = X.shape[0]
        self.blocks = blocks
        self.flagged = False

    def penalty(self, gamma):
        q = self.H.shape[0]
        P = np.zeros((q, q))
        for g, (sl, S) in zip(gamma, self.blocks):
            P[sl, sl] += g * S
        return P

    def factor(self, gamma):
        M = self.H + self.penalty(gamma)
        try:
            return linalg.cho_factor(M, lower=True, check_finite=False)
        except linalg.LinAlgError:
            self.flagged = True
            jitter = 1e-8 * np.eye(M.shape[0])
            try:
                return linalg.cho_factor(M + jitter, lower=True, check_finite=False)
            except linalg.LinAlgError:
                return linalg.cho_factor(M + 1e-8 * max(1.0, np.abs(M).max()) * np.eye(M.shape[0]), lower=True)

    def solve(self, gamma):
        return linalg.cho_solve(self.factor(gamma), self.b, check_finite=False)

    def influence_diag(self, gamma):
        """Diagonal of ``(H + P)^-1 H``; its sum is the EDF."""
        F = linalg.cho_solve(self.factor(gamma), self.H, check_finite=False)
        return np.diag(F)

    def gcv(self, gamma):
        cf = self.factor(gamma)
        theta = linalg.cho_solve(cf, self.b, check_finite=False)
        F = linalg.cho_solve(cf, self.H, check_finite=False)
        e = float(np.trace(F))
        if e >= self.n:
            return math.inf
        rss = self.yay - 2 * theta @ self.b + theta @ self.H @ theta
        return (max(rss, 0.0) / self.n) / (1 - e / self.n) ** 2


def ridge_step(wq: WorkingQuantities, gamma=None) -> np.ndarray:
    """Minimizer of ``||y - d theta||_a^2 + theta' p(gamma) theta``."""
    r = _Ridge(wq.d, wq.a, wq.y, wq.penalty_blocks)
    theta = r.solve(_gamma_vector(gamma, len(wq.penalty_blocks)))
    if r.flagged:
        log.warning("ridge system singular; added 1e-8 to the diagonal")
    return theta


def edf(wq: WorkingQuantities, gamma=None) -> float:
    r = _Ridge(wq.d, wq.a, wq.y, wq.penalty_blocks)
    return float(np.sum(r.influence_diag(_gamma_vector(gamma, len(wq.penalty_blocks)))))


def gcv(wq: WorkingQuantities, gamma=None) -> float:
    r = _Ridge(wq.d, wq.a, wq.y, wq.penalty_blocks)
    return r.gcv(_gamma_vector(gamma, len(wq.penalty_blocks)))


# ---------------------------------------------------------------------------
# penalized likelihood


def penalized_loglik(spec: GamSpec, family, data: EdgeData, theta, gamma=None) -> float:
    """``n^-1 sum log c(u1, u2; tau(w; theta)) - theta' p(gamma) theta / 2``."""
    family = fam.parse_family(family)
    theta = np.asarray(theta, dtype=float)
    pen = 0.5 * theta @ spec.penalty(gamma) @ theta
    if family.family == "indep":
        return -pen
    tau = predict_tau(spec, theta, data.w if spec.covariates else _nobs(data))
    ll = fam.prepare(family, data.u1, data.u2).loglik(np.broadcast_to(tau, (data.n,)))
    if not np.all(np.isfinite(ll)):
        raise ValueError("non-finite log-density; check that the data lie on the copula scale")
    return float(np.mean(ll)) - pen


# ---------------------------------------------------------------------------
# fit


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-6
    max_iter: int = 100
    weights: str = "expected"
    gamma: tuple | None = None  # fixed smoothing parameters (skip GCV)
    log_gamma_bounds: tuple = (-8.0, 8.0)
    sweeps: int = 2
    freeze_rel: float = 0.01
    freeze_after: int = 20
    max_halvings: int = 20


@dataclass(eq=False)
class GamFit:
    spec: GamSpec
    family: fam.FamilySpec
    theta: np.ndarray
    gamma: np.ndarray
    edf_total: float
    edf_terms: np.ndarray
    loglik: float
    aic: float
    bic: float
    covariance: np.ndarray
    n: int
    iterations: int
    converged: bool
    pvalues: np.ndarray = field(default=None)
    wald_factors: list = field(default_factory=list, repr=False)
    diagnostics: list = field(default_factory=list)

    @property
    def term_names(self) -> list[str]:
        return self.spec.term_names

    def predict_tau(self, w: Mapping):
        return predict_tau(self.spec, self.theta, w)

    def predict_eta_se(self, w: Mapping):
        """Linear predictor and its pointwise standard error."""
        D = self.spec.design(w)
        eta = D @ self.theta
        var = np.einsum("ij,jk,ik->i", D, self.covariance, D)
        return eta, np.sqrt(np.maximum(var, 0.0))

    def to_dict(self) -> dict:
        return {
            "family": self.family.id,
            "spec": self.spec.to_dict(),
            "terms": self.term_names,
            "theta": self.theta.tolist(),
            "gamma": self.gamma.tolist(),
            "edf_total": self.edf_total,
            "edf_terms": self.edf_terms.tolist(),
            "pvalues": None if self.pvalues is None else self.pvalues.tolist(),
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "covariance": self.covariance.tolist(),
            "wald_factors": [f.tolist() for f in self.wald_factors],
            "n": self.n,
            "iterations": self.iterations,
            "converged": self.converged,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GamFit":
        spec = GamSpec.from_dict(d["spec"])
        pv = d.get("pvalues")
        return cls(
            spec=spec,
            family=fam.parse_family(d["family"]),
            theta=np.asarray(d["theta"], dtype=float),
            gamma=np.asarray(d["gamma"], dtype=float),
            edf_total=float(d["edf_total"]),
            edf_terms=np.asarray(d["edf_terms"], dtype=float),
            loglik=float(d["loglik"]),
            aic=float(d["aic"]),
            bic=float(d["bic"]),
            covariance=np.asarray(d["covariance"], dtype=float).reshape(spec.p, spec.p),
            n=int(d["n"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
            pvalues=None if pv is None else np.asarray(pv, dtype=float),
            wald_factors=[np.asarray(f, dtype=float) for f in d.get("wald_factors", [])],
            diagnostics=list(d.get("diagnostics", [])),
        )


def _criteria(loglik, edf_total, n, n_aux):
    k = edf_total + n_aux
    return -2 * loglik + 2 * k, -2 * loglik + math.log(n) * k


def _independence_fit(spec: GamSpec, family, n) -> GamFit:
    nt = len(spec.term_names)
    return GamFit(
        spec=spec,
        family=family,
        theta=np.zeros(spec.p),
        gamma=np.zeros(len(spec.smooth)),
        edf_total=0.0,
        edf_terms=np.zeros(nt),
        loglik=0.0,
        aic=0.0,
        bic=0.0,
        covariance=np.zeros((spec.p, spec.p)),
        n=n,
        iterations=0,
        converged=True,
        pvalues=np.ones(nt),
        wald_factors=[np.zeros((s.m, s.m)) for s in spec.smooth],
    )


def _minimize_gcv(ridge: _Ridge, rho, scales, bounds, sweeps, window=None):
    """Coordinate-wise search over ``rho_k = log(gamma_k / scale_k)``.

    Each coordinate is scanned on a coarse grid, then refined by bounded
    Brent search around the best grid point. With ``window`` the scan is
    limited to ``rho_k +- window``, which keeps successive iterations from
    hopping between distant local minima.
    """
    lo, hi = bounds
    rho = np.array(rho, dtype=float)

    def score(r):
        return ridge.gcv(scales * np.exp(r))

    for _ in range(sweeps):
        for k in range(rho.size):
            def f(x, k=k):
                r = rho.copy()
                r[k] = x
                return score(r)

            if window is None:
                grid = np.linspace(lo, hi, 9)
            else:
                grid = np.linspace(max(lo, rho[k] - window), min(hi, rho[k] + window), 5)
            vals = [f(x) for x in grid]
            j = int(np.argmin(vals))
            a, b = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
            res = optimize.minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-3})
            best = res.x if res.fun <= vals[j] else grid[j]
            rho[k] = best
    return rho


def fit(spec: GamSpec, family, data: EdgeData, opts: FitOptions | None = None) -> GamFit:
    """Penalized MLE with GCV-selected smoothing, via Fisher-scoring ridge steps."""
    opts = opts or FitOptions()
    family = fam.parse_family(family)
    n = data.n
    if family.family == "indep":
        return _independence_fit(spec, family, n)
    w = data.w if spec.covariates else _nobs(data)
    D = _build_design(spec, w)
    K = len(spec.smooth)
    blocks = [(sl, S) for sl, S, _ in D.blocks]
    scales = np.array([c for _, _, c in D.blocks])
    prep = fam.prepare(family, data.u1, data.u2)
    diagnostics = []

    fixed_gamma = opts.gamma is not None
    if fixed_gamma:
        gamma = _gamma_vector(opts.gamma, K)
        rho = np.log(np.maximum(gamma, 1e-300) / scales) if K else np.zeros(0)
    else:
        rho = np.zeros(K)
        gamma = scales * np.exp(rho)
    frozen = fixed_gamma or K == 0
    stable = 0

    def pll(theta_red, gamma):
        eta = D.X @ theta_red
        ll = prep.loglik(link(eta))
        P = np.zeros((theta_red.size,) * 2)
        for g, (sl, S) in zip(gamma, blocks):
            P[sl, sl] += g * S
        return float(np.mean(ll)) - 0.5 * theta_red @ P @ theta_red

    theta = np.zeros(D.X.shape[1])
    converged = False
    bad_steps = 0
    floored_all = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        y, a, _, floored = _working(prep, D.X, theta, n, opts.weights)
        if floored == n:
            floored_all = True
        ridge = _Ridge(D.X, a, y, blocks)
        if not frozen:
            window = None if it == 1 else 2.0
            new = _minimize_gcv(ridge, rho, scales, opts.log_gamma_bounds, opts.sweeps, window)
            if np.max(np.abs(new - rho)) < math.log1p(opts.freeze_rel):
                stable += 1
            else:
                stable = 0
            rho = new
            gamma = scales * np.exp(rho)
            if stable >= 2:
                frozen = True
            elif it >= opts.freeze_after:
                frozen = True
                diagnostics.append(f"smoothing parameters frozen after {it} iterations without settling")
        step = ridge.solve(gamma)
        if ridge.flagged:
            diagnostics.append(f"iteration {it}: singular ridge system regularized")
        cur = pll(theta, gamma)
        new_val = pll(step, gamma)
        h = 0
        while not (new_val >= cur - 1e-12 * (1 + abs(cur))) and h < opts.max_halvings:
            step = 0.5 * (theta + step)
            new_val = pll(step, gamma)
            h += 1
        if not (new_val >= cur - 1e-12 * (1 + abs(cur))):
            bad_steps += 1
            if bad_steps >= 3:
                diagnostics.append("penalized likelihood kept decreasing; aborted")
                break
            continue
        bad_steps = 0
        delta = float(np.max(np.abs(step - theta))) if theta.size else 0.0
        theta = step
        if delta < opts.tol and frozen:
            converged = True
            break
    if not converged and it >= opts.max_iter:
        diagnostics.append(f"no convergence in {opts.max_iter} iterations")
    if floored_all:
        diagnostics.append("all Fisher weights floored (degenerate curvature)")

    # quantities at the final estimate
    y, a, ll, _ = _working(prep, D.X, theta, n, opts.weights)
    ridge = _Ridge(D.X, a, y, blocks)
    cf = ridge.factor(gamma)
    V_red = linalg.cho_solve(cf, np.eye(theta.size), check_finite=False) / n
    V_red = 0.5 * (V_red + V_red.T)
    infl = np.diag(linalg.cho_solve(cf, ridge.H, check_finite=False))

    edf_terms = np.empty(len(spec.term_names))
    edf_terms[: spec.n_linear] = infl[: spec.n_linear]
    for k, (sl, _, _) in enumerate(D.blocks):
        edf_terms[spec.n_linear + k] = infl[sl].sum()
    edf_total = float(infl.sum())
    loglik = float(np.sum(prep.loglik(link(D.X @ theta))))
    aic, bic = _criteria(loglik, edf_total, n, family.n_aux)

    wald_factors = [linalg.qr(B, mode="r")[0][: B.shape[1]] for B in D.raw_blocks]
    out = GamFit(
        spec=spec,
        family=family,
        theta=D.C @ theta,
        gamma=np.asarray(gamma, dtype=float),
        edf_total=edf_total,
        edf_terms=edf_terms,
        loglik=loglik,
        aic=aic,
        bic=bic,
        covariance=D.C @ V_red @ D.C.T,
        n=n,
        iterations=it,
        converged=converged,
        wald_factors=wald_factors,
        diagnostics=diagnostics,
    )
    out.pvalues = wald_pvalues(out)
    return out


def penalized_score(fit_: GamFit, data: EdgeData) -> np.ndarray:
    """Gradient of the penalized log-likelihood in the free (centered) coordinates."""
    spec = fit_.spec
    D = _build_design(spec, data.w if spec.covariates else _nobs(data))
    theta_red = D.C.T @ fit_.theta
    eta = D.X @ theta_red
    tau, g1, _ = _link_derivs(eta)
    _, d1, _ = fam.prepare(fit_.family, data.u1, data.u2).derivs(tau)
    grad = D.X.T @ (d1 * g1) / data.n
    P = np.zeros((theta_red.size,) * 2)
    for g, (sl, S, _) in zip(fit_.gamma, D.blocks):
        P[sl, sl] += g * S
    return grad - P @ theta_red


# ---------------------------------------------------------------------------
# Wald tests


def wald_pvalues(fit_: GamFit) -> np.ndarray:
    """Per-term p-values in ``term_names`` order.

    Linear terms use ``2(1 - Phi(|beta| / se))``. A smooth term is tested
    through its fitted values ``f = B s``: with ``B = QR`` the statistic is
    ``(R s)' V^- (R s)`` where ``V^-`` is the pseudo-inverse of
    ``R cov(s) R'`` truncated to rank ``round(EDF)``.
    """
    spec = fit_.spec
    out = np.ones(len(spec.term_names))
    if fit_.family.family == "indep":
        return out
    sls = spec.slices()
    var = np.diag(fit_.covariance)
    for j in range(spec.n_linear):
        se = math.sqrt(max(var[j], 0.0))
        if se <= 0:
            fit_.diagnostics.append(f"zero variance for {spec.term_names[j]}")
            continue
        out[j] = 2 * stats.norm.sf(abs(fit_.theta[j]) / se)
    for k, s in enumerate(spec.smooth):
        j = spec.n_linear + k
        sl = sls[j]
        R = fit_.wald_factors[k] if k < len(fit_.wald_factors) else np.eye(s.m)
        f = R @ fit_.theta[sl]
        Vf = R @ fit_.covariance[sl, sl] @ R.T
        Vf = 0.5 * (Vf + Vf.T)
        lam, U = np.linalg.eigh(Vf)
        order = np.argsort(lam)[::-1]
        lam, U = lam[order], U[:, order]
        r = int(min(max(1, round(fit_.edf_terms[j])), s.m - 1))
        if lam[0] <= 0:
            fit_.diagnostics.append(f"zero variance for {spec.term_names[j]}")
            continue
        keep = lam[:r] > lam[0] * 1e-12
        r = int(keep.sum())
        z = U[:, :r].T @ f
        stat = float(np.sum(z * z / lam[:r]))
        out[j] = float(stats.chi2.sf(stat, r))
    return out
