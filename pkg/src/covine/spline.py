"""Natural cubic spline bases in value-at-knot (cardinal) form.

A spline is parameterized by its values ``s`` at the knots. The natural
boundary conditions (zero curvature at the boundary knots) fix the interior
second derivatives as a linear map of ``s``, which gives both the basis
rows and the exact roughness penalty ``int s''(t)^2 dt = s' S s``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KnotSequence",
    "SplineBasis",
    "build_basis",
    "eval_basis",
    "place_knots",
]


@dataclass(frozen=True)
class KnotSequence:
    """Strictly increasing knots ``y_1 < ... < y_m`` inside ``support``."""

    knots: tuple[float, ...]
    support: tuple[float, float]

    def __post_init__(self):
        y = np.asarray(self.knots, dtype=float)
        if y.ndim != 1 or y.size < 3:
            raise ValueError(f"a natural cubic spline needs at least 3 knots, got {y.size}")
        if not np.all(np.isfinite(y)):
            raise ValueError("knots must be finite")
        if np.any(np.diff(y) <= 0):
            raise ValueError("knots must be strictly increasing")
        lo, hi = self.support
        if lo > y[0] or hi < y[-1]:
            raise ValueError(f"support [{lo}, {hi}] does not bracket knots [{y[0]}, {y[-1]}]")

    @classmethod
    def from_array(cls, knots, support=None) -> "KnotSequence":
        y = tuple(float(k) for k in np.asarray(knots, dtype=float))
        if support is None:
            support = (y[0], y[-1]) if y else (0.0, 0.0)
        return cls(y, (float(support[0]), float(support[1])))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.knots, dtype=float)

    def __len__(self):
        return len(self.knots)


@dataclass(frozen=True, eq=False)
class SplineBasis:
    knots: KnotSequence
    # interior second derivatives as a linear map of knot values, padded
    # with zero rows for the two boundary knots (m x m)
    curvature: np.ndarray = field(repr=False)
    penalty: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.knots)

    def __call__(self, t, deriv: int = 0) -> np.ndarray:
        return eval_basis(self, t, deriv)


def build_basis(knots: KnotSequence) -> SplineBasis:
    """Cardinal natural cubic spline basis and its roughness penalty.

    With ``h_i = y_{i+1} - y_i``, the interior second derivatives solve
    ``R gamma = Q' s`` (Green & Silverman), so ``S = Q R^{-1} Q'``.
    """
    if not isinstance(knots, KnotSequence):
        knots = KnotSequence.from_array(knots)
    y = knots.array
    m = y.size
    h = np.diff(y)

    Q = np.zeros((m, m - 2))
    R = np.zeros((m - 2, m - 2))
    for j in range(m - 2):
        Q[j, j] = 1.0 / h[j]
        Q[j + 1, j] = -1.0 / h[j] - 1.0 / h[j + 1]
        Q[j + 2, j] = 1.0 / h[j + 1]
        R[j, j] = (h[j] + h[j + 1]) / 3.0
        if j + 1 < m - 2:
            R[j, j + 1] = R[j + 1, j] = h[j + 1] / 6.0

    G = np.linalg.solve(R, Q.T)
    curvature = np.zeros((m, m))
    curvature[1:-1] = G
    S = Q @ G
    S = 0.5 * (S + S.T)
    curvature.setflags(write=False)
    S.setflags(write=False)
    return SplineBasis(knots=knots, curvature=curvature, penalty=S)


def eval_basis(basis: SplineBasis, t, deriv: int = 0) -> np.ndarray:
    """Basis rows at ``t`` such that ``s(t) = eval_basis(basis, t) @ s``.

    Returns shape ``(m,)`` for scalar ``t`` and ``(len(t), m)`` otherwise.
    The spline continues linearly outside ``[y_1, y_m]``.
    """
    if deriv not in (0, 1, 2):
        raise ValueError("deriv must be 0, 1 or 2")
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    y = basis.knots.array
    m = y.size
    G = basis.curvature
    n = t.size

    i = np.clip(np.searchsorted(y, t, side="right") - 1, 0, m - 2)
    h = y[i + 1] - y[i]
    a = (y[i + 1] - t) / h
    b = (t - y[i]) / h
    rows = np.arange(n)

    out = np.zeros((n, m))
    left = t < y[0]
    right = t > y[-1]
    inside = ~(left | right)

    if deriv == 0:
        out[rows, i] += a
        out[rows, i + 1] += b
        ca = (a**3 - a) * h**2 / 6.0
        cb = (b**3 - b) * h**2 / 6.0
    elif deriv == 1:
        out[rows, i] -= 1.0 / h
        out[rows, i + 1] += 1.0 / h
        ca = -(3 * a**2 - 1) * h / 6.0
        cb = (3 * b**2 - 1) * h / 6.0
    else:
        ca, cb = a, b
    ca = np.where(inside, ca, 0.0)
    cb = np.where(inside, cb, 0.0)
    out += ca[:, None] * G[i] + cb[:, None] * G[i + 1]

    if np.any(left | right):
        out[~inside] = 0.0
        if deriv < 2:
            slope_lo = _boundary_slope(basis, 0)
            slope_hi = _boundary_slope(basis, m - 1)
            for mask, k, slope in ((left, 0, slope_lo), (right, m - 1, slope_hi)):
                if not np.any(mask):
                    continue
                if deriv == 0:
                    e = np.zeros(m)
                    e[k] = 1.0
                    out[mask] = e + np.outer(t[mask] - y[k], slope)
                else:
                    out[mask] = slope
    return out[0] if scalar else out


def _boundary_slope(basis: SplineBasis, k: int) -> np.ndarray:
    y = basis.knots.array
    G = basis.curvature
    m = y.size
    e = np.eye(m)
    if k == 0:
        h = y[1] - y[0]
        return (e[1] - e[0]) / h - h / 6.0 * G[1]
    h = y[-1] - y[-2]
    return (e[-1] - e[-2]) / h + h / 6.0 * G[-2]


def place_knots(values, m: int, strategy: str = "quantile", name: str | None = None) -> KnotSequence:
    """Knots for a covariate: ``m`` evenly spaced points over the data range
    (``equidistant``) or sample quantiles at ``i/(m+1)`` (``quantile``)."""
    label = f" for covariate {name!r}" if name else ""
    if m < 3:
        raise ValueError(f"need at least 3 knots{label}, got {m}")
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError(f"no values to place knots{label}")
    lo, hi = float(np.min(x)), float(np.max(x))
    if strategy == "equidistant":
        if not hi > lo:
            raise ValueError(f"constant values{label}: cannot place knots")
        knots = np.linspace(lo, hi, m)
    elif strategy == "quantile":
        if np.unique(x).size < m:
            raise ValueError(f"fewer than {m} distinct values{label}")
        knots = np.quantile(x, np.arange(1, m + 1) / (m + 1))
        if np.any(np.diff(knots) <= 0):
            raise ValueError(f"ties in the data make quantile knots coincide{label}")
    else:
        raise ValueError(f"unknown knot strategy {strategy!r}")
    return KnotSequence.from_array(knots, (min(lo, knots[0]), max(hi, knots[-1])))
