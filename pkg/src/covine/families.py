"""Bivariate copula families parameterized by Kendall's tau.

Every family is exposed through :class:`FamilySpec`. Densities, their first
two derivatives in tau, h-functions and their inverses are vectorized over
``u``, ``v`` and ``tau``.

Rotations follow ``c_90(u, v; -tau) = c(v, 1 - u; tau)``,
``c_270(u, v; -tau) = c(1 - v, u; tau)`` and
``c_180(u, v; tau) = c(1 - u, 1 - v; tau)``. A *sign-switching* spec such as
``clayton@0/90`` uses the first rotation for rows with ``tau >= 0`` and the
second for rows with ``tau < 0``, so its tau may cross zero.

h-function convention: ``which=1`` gives ``h(u | v) = dC(u, v)/dv`` and
``which=2`` gives ``h(v | u) = dC(u, v)/du``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

__all__ = [
    "FamilySpec",
    "parse_family",
    "tau_to_par",
    "par_to_tau",
    "logpdf",
    "pdf",
    "dlogpdf_dtau",
    "d2logpdf_dtau2",
    "hfunc",
    "hinv",
    "fisher_info",
    "prepare",
    "admissible_range",
    "clip_tau",
    "clip_u",
    "NU_GRID",
]

U_EPS = 1e-10
TAU_EPS = 1e-4
NU_GRID = (3.0, 4.0, 5.0, 7.0, 10.0, 15.0, 30.0)

FAMILIES = ("indep", "gaussian", "t", "clayton", "gumbel")
_ARCHIMEDEAN = ("clayton", "gumbel")
_SIGN = {0: 1.0, 90: -1.0, 180: 1.0, 270: -1.0}


@dataclass(frozen=True)
class FamilySpec:
    """A copula family with rotation and fixed auxiliary parameter.

    ``rotation`` applies to every row unless ``neg_rotation`` is set, in
    which case ``rotation`` (0 or 180) serves ``tau >= 0`` and
    ``neg_rotation`` (90 or 270) serves ``tau < 0``. ``nu=None`` for the
    t family means "select nu from :data:`NU_GRID`" and is only valid as a
    selection candidate.
    """

    family: str
    rotation: int = 0
    nu: float | None = None
    neg_rotation: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.rotation not in _SIGN:
            raise ValueError(f"rotation must be one of 0, 90, 180, 270, got {self.rotation}")
        if self.family not in _ARCHIMEDEAN:
            if self.rotation != 0 or self.neg_rotation is not None:
                raise ValueError(f"{self.family} does not take rotations")
        if self.neg_rotation is not None:
            if self.rotation not in (0, 180) or self.neg_rotation not in (90, 270):
                raise ValueError("sign-switching specs pair 0/180 with 90/270")
        if self.family == "t":
            if self.nu is not None and not (np.isfinite(self.nu) and self.nu > 2):
                raise ValueError(f"t copula needs finite nu > 2, got {self.nu}")
        elif self.nu is not None:
            raise ValueError(f"{self.family} takes no nu")

    @property
    def id(self) -> str:
        if self.family == "t":
            return "t" if self.nu is None else f"t(nu={_fmt_nu(self.nu)})"
        if self.neg_rotation is not None:
            return f"{self.family}@{self.rotation}/{self.neg_rotation}"
        if self.rotation:
            return f"{self.family}@{self.rotation}"
        return self.family

    def __str__(self):
        return self.id

    @property
    def switching(self) -> bool:
        return self.neg_rotation is not None

    @property
    def n_aux(self) -> int:
        return 1 if self.family == "t" else 0


def _fmt_nu(nu: float) -> str:
    return str(int(nu)) if float(nu).is_integer() else repr(float(nu))


_ID_RE = re.compile(r"^(?P<fam>[a-z]+)(?:\(nu=(?P<nu>[0-9.eE+-]+)\))?(?:@(?P<rot>\d+)(?:/(?P<neg>\d+))?)?$")


def parse_family(text: str | FamilySpec) -> FamilySpec:
    """Parse ids like ``gaussian``, ``t(nu=4)``, ``gumbel@90``, ``clayton@0/270``."""
    if isinstance(text, FamilySpec):
        return text
    s = text.strip().lower()
    aliases = {"independence": "indep", "normal": "gaussian", "student": "t", "studentt": "t"}
    mt = _ID_RE.match(s)
    if mt is None:
        raise ValueError(f"cannot parse family id {text!r}")
    fam = aliases.get(mt["fam"], mt["fam"])
    nu = float(mt["nu"]) if mt["nu"] is not None else None
    rot = int(mt["rot"]) if mt["rot"] is not None else 0
    neg = int(mt["neg"]) if mt["neg"] is not None else None
    return FamilySpec(fam, rot, nu, neg)


# ---------------------------------------------------------------------------
# tau <-> natural parameter for the unrotated families (base tau)


def _par(fam: str, tb):
    """Parameter and its first two derivatives with respect to base tau."""
    tb = np.asarray(tb, dtype=float)
    if fam in ("gaussian", "t"):
        c = np.pi / 2
        return np.sin(c * tb), c * np.cos(c * tb), -(c**2) * np.sin(c * tb)
    if fam == "clayton":
        r = 1.0 - tb
        return 2 * tb / r, 2 / r**2, 4 / r**3
    if fam == "gumbel":
        r = 1.0 - tb
        return 1 / r, 1 / r**2, 2 / r**3
    z = np.zeros_like(tb)
    return z, z, z


def admissible_range(spec: FamilySpec) -> tuple[float, float]:
    """Open tau interval on which the spec is defined."""
    spec = parse_family(spec)
    if spec.family in _ARCHIMEDEAN and not spec.switching:
        return (0.0, 1.0) if _SIGN[spec.rotation] > 0 else (-1.0, 0.0)
    return (-1.0, 1.0)


def _check_tau(spec: FamilySpec, tau):
    lo, hi = admissible_range(spec)
    tau = np.asarray(tau, dtype=float)
    bad = ~np.isfinite(tau) | (tau < lo) | (tau > hi)
    if np.any(bad):
        raise ValueError(f"tau outside admissible range ({lo}, {hi}) for {spec.id}")
    return tau


def clip_tau(spec: FamilySpec, tau):
    """Project tau into the admissible interval shrunk by ``TAU_EPS``."""
    spec = parse_family(spec)
    tau = np.asarray(tau, dtype=float)
    if spec.family == "indep":
        return np.zeros_like(tau)
    if spec.family in _ARCHIMEDEAN:
        if spec.switching:
            mag = np.clip(np.abs(tau), TAU_EPS, 1 - TAU_EPS)
            return np.where(tau < 0, -mag, mag)
        lo, hi = admissible_range(spec)
        return np.clip(tau, lo + TAU_EPS, hi - TAU_EPS)
    return np.clip(tau, -1 + TAU_EPS, 1 - TAU_EPS)


def clip_u(u):
    return np.clip(np.asarray(u, dtype=float), U_EPS, 1 - U_EPS)


def tau_to_par(spec, tau):
    """Natural parameter (rho for elliptical, theta for Archimedean).

    Rotated Archimedean specs return the parameter of the underlying
    unrotated copula, which is always positive dependence.
    """
    spec = parse_family(spec)
    tau = _check_tau(spec, tau)
    if spec.family == "indep":
        return np.zeros_like(tau)[()]
    tb = np.abs(tau) if spec.family in _ARCHIMEDEAN else tau
    return _par(spec.family, tb)[0][()]


def par_to_tau(spec, par):
    spec = parse_family(spec)
    par = np.asarray(par, dtype=float)
    fam = spec.family
    if fam == "indep":
        return np.zeros_like(par)[()]
    if fam in ("gaussian", "t"):
        if np.any(np.abs(par) >= 1):
            raise ValueError("correlation parameter must lie in (-1, 1)")
        return (2 / np.pi * np.arcsin(par))[()]
    if fam == "clayton":
        if np.any(par <= 0):
            raise ValueError("Clayton parameter must be positive")
        tb = par / (par + 2)
    else:
        if np.any(par <= 1):
            raise ValueError("Gumbel parameter must exceed 1")
        tb = 1 - 1 / par
    if spec.switching:
        raise ValueError(f"{spec.id} maps one parameter to two taus; use a fixed rotation")
    return (_SIGN[spec.rotation] * tb)[()]


# ---------------------------------------------------------------------------
# unrotated families: log-density and its derivatives in the natural
# parameter, h-function hb(x, y) = P(X <= x | Y = y) and its inverse in x


class _Gaussian:
    @staticmethod
    def prepare(u, v, nu):
        x, y = special.ndtri(u), special.ndtri(v)
        return {"q2": x * x + y * y, "xy": x * y}

    @staticmethod
    def derivs(P, rho, nu):
        q2, xy = P["q2"], P["xy"]
        s = 1 - rho * rho
        N = rho * rho * q2 - 2 * rho * xy
        N1 = 2 * rho * q2 - 2 * xy
        N2 = 2 * q2
        s1 = -2 * rho
        ll = -0.5 * np.log(s) - N / (2 * s)
        T1 = (N1 * s - N * s1) / (2 * s * s)
        T2 = ((N2 * s + 2 * N) * s - 2 * s1 * (N1 * s - N * s1)) / (2 * s**3)
        return ll, rho / s - T1, (1 + rho * rho) / s**2 - T2

    @staticmethod
    def hb(x, y, rho, nu):
        a, b = special.ndtri(x), special.ndtri(y)
        return special.ndtr((a - rho * b) / np.sqrt(1 - rho * rho))

    @staticmethod
    def hbinv(p, y, rho, nu):
        a, b = special.ndtri(p), special.ndtri(y)
        return special.ndtr(np.sqrt(1 - rho * rho) * a + rho * b)


class _StudentT:
    @staticmethod
    def prepare(u, v, nu):
        x, y = special.stdtrit(nu, u), special.stdtrit(nu, v)
        return {
            "q2": x * x + y * y,
            "xy": x * y,
            "lm": np.log1p(x * x / nu) + np.log1p(y * y / nu),
        }

    @staticmethod
    def derivs(P, rho, nu):
        q2, xy = P["q2"], P["xy"]
        const = special.gammaln((nu + 2) / 2) + special.gammaln(nu / 2) - 2 * special.gammaln((nu + 1) / 2)
        s = 1 - rho * rho
        s1 = -2 * rho
        Q = q2 - 2 * rho * xy
        Q1 = -2 * xy
        M = Q / (nu * s)
        M1 = (Q1 * s - Q * s1) / (nu * s * s)
        M2 = (2 * Q * s - 2 * s1 * (Q1 * s - Q * s1)) / (nu * s**3)
        k = (nu + 2) / 2
        ll = const - 0.5 * np.log(s) - k * np.log1p(M) + (nu + 1) / 2 * P["lm"]
        d1 = rho / s - k * M1 / (1 + M)
        d2 = (1 + rho * rho) / s**2 - k * (M2 / (1 + M) - (M1 / (1 + M)) ** 2)
        return ll, d1, d2

    @staticmethod
    def hb(x, y, rho, nu):
        a, b = special.stdtrit(nu, x), special.stdtrit(nu, y)
        scale = np.sqrt((nu + b * b) * (1 - rho * rho) / (nu + 1))
        return special.stdtr(nu + 1, (a - rho * b) / scale)

    @staticmethod
    def hbinv(p, y, rho, nu):
        b = special.stdtrit(nu, y)
        scale = np.sqrt((nu + b * b) * (1 - rho * rho) / (nu + 1))
        return special.stdtr(nu, special.stdtrit(nu + 1, p) * scale + rho * b)


def _clayton_lb(a, b):
    """``log(e^a + e^b - 1)`` for ``a, b >= 0`` without overflow."""
    m = np.maximum(a, b)
    with np.errstate(over="ignore"):
        small = np.log1p(np.expm1(np.minimum(a, 30.0)) + np.expm1(np.minimum(b, 30.0)))
    big = m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))
    return np.where(m > 30.0, big, small)


class _Clayton:
    @staticmethod
    def prepare(u, v, nu):
        return {"lu": np.log(u), "lv": np.log(v)}

    @staticmethod
    def derivs(P, th, nu):
        lu, lv = P["lu"], P["lv"]
        LB = _clayton_lb(-th * lu, -th * lv)
        wu, wv = np.exp(-th * lu - LB), np.exp(-th * lv - LB)
        LB1 = -lu * wu - lv * wv
        LB2 = lu * lu * wu + lv * lv * wv - LB1 * LB1
        k = 2 + 1 / th
        ll = np.log1p(th) - (th + 1) * (lu + lv) - k * LB
        d1 = 1 / (1 + th) - (lu + lv) + LB / th**2 - k * LB1
        d2 = -1 / (1 + th) ** 2 - 2 * LB / th**3 + 2 * LB1 / th**2 - k * LB2
        return ll, d1, d2

    @staticmethod
    def hb(x, y, th, nu):
        lx, ly = np.log(x), np.log(y)
        LB = _clayton_lb(-th * lx, -th * ly)
        return np.exp(-(th + 1) * ly - (1 + 1 / th) * LB)

    @staticmethod
    def hbinv(p, y, th, nu):
        ly = np.log(y)
        A = -(np.log(p) + (th + 1) * ly) * th / (1 + th)
        Bv = -th * ly
        # log(x^-theta) = log(e^A - e^Bv + 1), with A >= Bv
        with np.errstate(over="ignore"):
            small = np.log1p(np.maximum(np.expm1(np.minimum(A, 30.0)) - np.expm1(np.minimum(Bv, 30.0)), 0.0))
        big = A + np.log1p(np.maximum(np.exp(-A) - np.exp(np.minimum(Bv - A, 0.0)), -1 + 1e-300))
        lxt = np.where(A > 30.0, big, small)
        return np.exp(-lxt / th)


class _Gumbel:
    @staticmethod
    def prepare(u, v, nu):
        X, Y = -np.log(u), -np.log(v)
        return {"X": X, "Y": Y, "lx": np.log(X), "ly": np.log(Y)}

    @staticmethod
    def derivs(P, th, nu):
        X, Y, lx, ly = P["X"], P["Y"], P["lx"], P["ly"]
        a = np.logaddexp(th * lx, th * ly)
        wx = np.exp(th * lx - a)
        wy = 1 - wx
        a1 = lx * wx + ly * wy
        a2 = lx * lx * wx + ly * ly * wy - a1 * a1
        q = a / th
        q1 = a1 / th - a / th**2
        q2 = a2 / th - 2 * a1 / th**2 + 2 * a / th**3
        w = np.exp(q)
        w1 = w * q1
        w2 = w * (q2 + q1 * q1)
        den = w + th - 1
        ll = -w + (th - 1) * (lx + ly) + X + Y + (1 / th - 2) * a + np.log(den)
        d1 = -w1 + (lx + ly) - a / th**2 + (1 / th - 2) * a1 + (w1 + 1) / den
        d2 = -w2 + 2 * a / th**3 - 2 * a1 / th**2 + (1 / th - 2) * a2 + w2 / den - ((w1 + 1) / den) ** 2
        return ll, d1, d2

    @staticmethod
    def hb(x, y, th, nu):
        X, Y = -np.log(x), -np.log(y)
        a = np.logaddexp(th * np.log(X), th * np.log(Y))
        w = np.exp(a / th)
        return np.exp(-w + (1 / th - 1) * a + (th - 1) * np.log(Y) + Y)

    @staticmethod
    def hbinv(p, y, th, nu):
        Y = -np.log(y)
        ly = np.log(Y)
        th = np.broadcast_to(th, np.broadcast(p, y, th).shape)
        c = (th - 1) * ly + Y - np.log(p)
        # f(w) = -w + (1 - th) log w + c is convex decreasing with f(Y) >= 0,
        # so Newton from w = Y increases monotonically to the root
        w = np.broadcast_to(Y, c.shape).astype(float).copy()
        for _ in range(100):
            f = -w + (1 - th) * np.log(w) + c
            step = f / (-1 + (1 - th) / w)
            w = w - step
            if np.all(np.abs(step) <= 1e-15 * w):
                break
        lw = np.log(w)
        gap = np.minimum(th * (ly - lw), -1e-300)
        lx = lw + np.log(-np.expm1(gap)) / th
        return np.exp(-np.exp(lx))


_BASE = {"gaussian": _Gaussian, "t": _StudentT, "clayton": _Clayton, "gumbel": _Gumbel}


def _rotate(rot: int, u, v):
    """Coordinates at which the unrotated density is evaluated."""
    if rot == 90:
        return v, 1 - u
    if rot == 270:
        return 1 - v, u
    if rot == 180:
        return 1 - u, 1 - v
    return u, v


def _need_nu(spec: FamilySpec) -> float | None:
    if spec.family == "t":
        if spec.nu is None:
            raise ValueError("t copula needs a fixed nu here; 't' alone is a selection placeholder")
        return float(spec.nu)
    return None


# ---------------------------------------------------------------------------
# prepared data: per-row transforms reused while tau changes during a fit


class Prepared:
    """Data-dependent transforms for repeated evaluation at varying tau."""

    def __init__(self, spec: FamilySpec, u, v):
        self.spec = spec = parse_family(spec)
        u, v = np.broadcast_arrays(clip_u(u), clip_u(v))
        self.n = u.size
        self._nu = _need_nu(spec)
        self._parts = {}
        if spec.family == "indep":
            return
        base = _BASE[spec.family]
        rots = [spec.rotation] + ([spec.neg_rotation] if spec.switching else [])
        for rot in rots:
            a, b = _rotate(rot, u, v)
            self._parts[rot] = base.prepare(clip_u(a), clip_u(b), self._nu)

    def derivs(self, tau):
        """Log-density and its first two tau-derivatives at the clipped tau."""
        spec = self.spec
        tau = np.broadcast_to(np.asarray(tau, dtype=float), (self.n,))
        if spec.family == "indep":
            z = np.zeros(self.n)
            return z, z.copy(), z.copy()
        tau = clip_tau(spec, tau)
        base = _BASE[spec.family]
        if not spec.switching:
            return _part_derivs(base, spec.family, self._parts[spec.rotation], _SIGN[spec.rotation], tau, self._nu)
        ll, d1, d2 = np.empty(self.n), np.empty(self.n), np.empty(self.n)
        neg = tau < 0
        for rot, mask in ((spec.rotation, ~neg), (spec.neg_rotation, neg)):
            if not np.any(mask):
                continue
            P = {k: val[mask] for k, val in self._parts[rot].items()}
            ll[mask], d1[mask], d2[mask] = _part_derivs(base, spec.family, P, _SIGN[rot], tau[mask], self._nu)
        return ll, d1, d2

    def loglik(self, tau):
        return self.derivs(tau)[0]


def _part_derivs(base, fam, P, sign, tau, nu):
    tb = sign * tau
    par, p1, p2 = _par(fam, tb)
    ll, g1, g2 = base.derivs(P, par, nu)
    d1 = sign * g1 * p1
    d2 = g2 * p1 * p1 + g1 * p2
    return ll, d1, d2


def prepare(spec, u, v) -> Prepared:
    return Prepared(spec, u, v)


def _evaluate(spec, u, v, tau):
    spec = parse_family(spec)
    tau = _check_tau(spec, tau)
    u, v, tau = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float), tau)
    shape = u.shape
    out = Prepared(spec, u.ravel(), v.ravel()).derivs(tau.ravel())
    return [o.reshape(shape)[()] for o in out]


def logpdf(spec, u, v, tau):
    """Log copula density at ``(u, v)`` for Kendall's ``tau``."""
    return _evaluate(spec, u, v, tau)[0]


def pdf(spec, u, v, tau):
    return np.exp(logpdf(spec, u, v, tau))


def dlogpdf_dtau(spec, u, v, tau):
    return _evaluate(spec, u, v, tau)[1]


def d2logpdf_dtau2(spec, u, v, tau):
    return _evaluate(spec, u, v, tau)[2]


# ---------------------------------------------------------------------------
# h-functions


def _rot_for(spec: FamilySpec, tau):
    """Per-row rotation and base tau for Archimedean specs."""
    if spec.switching:
        rot = np.where(tau < 0, spec.neg_rotation, spec.rotation)
    else:
        rot = np.full(tau.shape, spec.rotation)
    sign = np.where((rot == 90) | (rot == 270), -1.0, 1.0)
    return rot, sign * tau


def _h_dispatch(spec, which, a, b, tau, inverse):
    spec = parse_family(spec)
    tau = _check_tau(spec, tau)
    a, b, tau = np.broadcast_arrays(clip_u(a), clip_u(b), tau)
    shape = a.shape
    a, b, tau = a.ravel(), b.ravel(), clip_tau(spec, tau.ravel())
    if spec.family == "indep":
        return a.reshape(shape)[()]
    nu = _need_nu(spec)
    base = _BASE[spec.family]
    f = base.hbinv if inverse else base.hb
    if spec.family in _ARCHIMEDEAN:
        rot, tb = _rot_for(spec, tau)
    else:
        rot, tb = np.zeros(tau.shape, dtype=int), tau
    par = _par(spec.family, tb)[0]
    out = np.empty_like(a)
    for r in np.unique(rot):
        mk = rot == r
        out[mk] = _rotated_h(f, int(r), which, a[mk], b[mk], par[mk], nu, inverse)
    return clip_u(out).reshape(shape)[()]


def _rotated_h(f, rot, which, a, b, par, nu, inverse):
    # a is the conditioned argument (the probability when inverting), b the
    # conditioning value; the rotation maps take the same form both ways
    cl = clip_u
    if rot == 0:
        return f(cl(a), cl(b), par, nu)
    if rot == 180:
        return 1 - f(cl(1 - a), cl(1 - b), par, nu)
    if (rot == 90) == (which == 1):
        return 1 - f(cl(1 - a), cl(b), par, nu)
    return f(cl(a), cl(1 - b), par, nu)


def hfunc(spec, which: int, u, v, tau):
    """``which=1``: ``h(u | v) = dC/dv``; ``which=2``: ``h(v | u) = dC/du``."""
    if which == 1:
        return _h_dispatch(spec, 1, u, v, tau, inverse=False)
    if which == 2:
        return _h_dispatch(spec, 2, v, u, tau, inverse=False)
    raise ValueError("which must be 1 or 2")


def hinv(spec, which: int, p, cond, tau):
    """Inverse of :func:`hfunc` in its conditioned argument.

    ``which=1`` returns ``u`` with ``h(u | cond) = p``; ``which=2`` returns
    ``v`` with ``h(v | cond) = p`` where ``cond`` is the first argument.
    """
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    return _h_dispatch(spec, which, p, cond, tau, inverse=True)


# ---------------------------------------------------------------------------
# expected Fisher information in tau

_GL_NODES = 48


@lru_cache(maxsize=None)
def _info_table(fam: str, nu: float | None):
    """Expected information of the unrotated family on a base-tau grid.

    ``E[(d log c / d tau)^2]`` is integrated over ``(p, q)`` in the unit
    square with ``(U, V) = (p, hbinv(q, p))``, which is distributed as the
    copula.
    """
    # nodes in normal-score space concentrate near the edges, where the score
    # is unbounded
    z, w = np.polynomial.legendre.leggauss(_GL_NODES)
    z, w = 7.0 * z, 7.0 * w * np.exp(-0.5 * (7.0 * z) ** 2) / np.sqrt(2 * np.pi)
    x, w = np.clip(special.ndtr(z), 1e-12, 1 - 1e-12), w / w.sum()
    P, Q = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w).ravel()
    P, Q = P.ravel(), Q.ravel()
    lo = TAU_EPS if fam in _ARCHIMEDEAN else 0.0
    grid = lo + (0.97 - lo) * (1 - np.cos(np.linspace(0, np.pi, 49))) / 2
    base = _BASE[fam]
    vals = []
    for tb in grid:
        par = _par(fam, tb)[0]
        V = clip_u(base.hbinv(Q, P, par, nu))
        prep = base.prepare(clip_u(P), V, nu)
        _, g1, _ = base.derivs(prep, par, nu)
        p1 = _par(fam, tb)[1]
        vals.append(np.sum(W * (g1 * p1) ** 2))
    vals = np.asarray(vals)
    return grid, CubicSpline(grid, np.log(vals))


def fisher_info(spec, tau):
    """Expected Fisher information for tau, per observation."""
    spec = parse_family(spec)
    tau = np.asarray(tau, dtype=float)
    if spec.family == "indep":
        return np.zeros_like(tau)
    tau = clip_tau(spec, tau)
    if spec.family == "gaussian":
        rho, r1, _ = _par("gaussian", tau)
        return (1 + rho**2) / (1 - rho**2) ** 2 * r1**2
    tb = np.abs(tau)
    grid, spl = _info_table(spec.family, _need_nu(spec))
    return np.exp(spl(np.clip(tb, grid[0], grid[-1])))
