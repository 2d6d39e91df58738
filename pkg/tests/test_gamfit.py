import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import optimize

from covine import families as fam
from covine.gamfit import (
    EdgeData,
    FitOptions,
    GamFit,
    GamSpec,
    WorkingQuantities,
    _build_design,
    edf,
    fit,
    gcv,
    link,
    link_inverse,
    linear_predictor,
    penalized_loglik,
    penalized_score,
    predict_tau,
    ridge_step,
    wald_pvalues,
    working_quantities,
)
from conftest import simulate_pair


def golden_mle(spec, u1, u2):
    """1-d MLE of a constant tau by golden-section search."""
    lo, hi = fam.admissible_range(spec)
    f = lambda t: -np.sum(fam.logpdf(spec, u1, u2, np.full(u1.size, t)))
    lo, hi = max(lo, -0.99) + 1e-6, min(hi, 0.99) - 1e-6
    grid = np.linspace(lo, hi, 199)
    j = int(np.argmin([f(t) for t in grid]))
    a, b = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
    return optimize.golden(f, brack=(a, grid[j], b), tol=1e-10) if 0 < j < grid.size - 1 else grid[j]


def _covariate_data(rng, n, family="gaussian"):
    w = {"x": rng.uniform(size=n), "z": rng.standard_normal(n), "b": rng.binomial(1, 0.5, n).astype(float)}
    eta = 0.4 * w["z"] - 0.3 * w["b"] + np.sin(2 * np.pi * w["x"]) / 2 + 0.2
    u1, u2 = simulate_pair(family, link(eta), rng)
    return EdgeData(u1, u2, w), eta


# ---------------------------------------------------------------------------
# link and predictor


def test_link_values():
    assert link(0.0) == 0.0
    assert_allclose(link(np.log(3)), 0.5, atol=1e-15)
    assert_allclose(link_inverse(link(np.linspace(-5, 5, 11))), np.linspace(-5, 5, 11), atol=1e-12)


def test_zero_theta_gives_zero_tau(rng):
    w = {"x": rng.uniform(size=20), "z": rng.standard_normal(20)}
    spec = GamSpec.build(w, linear=["z"], smooth=["x"], basis_size=5)
    assert_allclose(predict_tau(spec, np.zeros(spec.p), w), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.integers(0, 2**31 - 1))
def test_link_antisymmetry(theta, seed):
    rng = np.random.default_rng(seed)
    w = {"a": rng.standard_normal(15), "b": rng.standard_normal(15)}
    w = {k: v - v.mean() for k, v in w.items()}
    spec = GamSpec.build(w, linear=["a", "b"])
    th = np.array(theta)
    assert_allclose(predict_tau(spec, -th, w), -predict_tau(spec, th, w), atol=1e-14)


def test_linear_predictor_matches_design(rng):
    w = {"x": rng.uniform(size=12), "z": rng.standard_normal(12)}
    spec = GamSpec.build(w, linear=["z"], smooth=["x"], basis_size=4)
    th = rng.standard_normal(spec.p)
    assert_allclose(linear_predictor(spec, th, w), spec.design(w) @ th, atol=1e-14)


def test_missing_covariate_raises(rng):
    w = {"x": rng.uniform(size=12)}
    spec = GamSpec.build(w, smooth=["x"], basis_size=4)
    with pytest.raises(ValueError, match="missing covariate"):
        predict_tau(spec, np.zeros(spec.p), {"y": w["x"]})


def test_spec_round_trip(rng):
    w = {"x": rng.uniform(size=40), "z": rng.standard_normal(40)}
    spec = GamSpec.build(w, linear=["z"], smooth=["x"], basis_size=6)
    back = GamSpec.from_dict(spec.to_dict())
    assert back.term_names == spec.term_names == ["(Intercept)", "z", "s(x)"]
    assert_allclose(back.design(w), spec.design(w), rtol=0, atol=0)


# ---------------------------------------------------------------------------
# penalized likelihood


def test_independence_loglik_is_penalty_only(rng):
    w = {"x": rng.uniform(size=30)}
    spec = GamSpec.build(w, smooth=["x"], basis_size=5)
    data = EdgeData(*rng.uniform(size=(2, 30)), w)
    th = rng.standard_normal(spec.p)
    val = penalized_loglik(spec, "indep", data, th, [2.0])
    assert_allclose(val, -0.5 * th @ spec.penalty([2.0]) @ th, rtol=1e-14)


def test_loglik_matches_direct_sum(rng):
    n = 50
    w = {"x": rng.uniform(size=n), "z": rng.standard_normal(n)}
    spec = GamSpec.build(w, linear=["z"], smooth=["x"], basis_size=5)
    u1, u2 = rng.uniform(size=(2, n))
    data = EdgeData(u1, u2, w)
    th = 0.3 * rng.standard_normal(spec.p)
    X = spec.design(w)
    g = fam.parse_family("gaussian")
    direct = 0.0
    for i in range(n):
        tau = np.tanh(X[i] @ th / 2)
        direct += fam.logpdf(g, u1[i:i + 1], u2[i:i + 1], np.array([tau]))[0]
    assert_allclose(penalized_loglik(spec, g, data, th, 0.0), direct / n, rtol=1e-12)
    pen = 0.5 * th @ spec.penalty([0.7]) @ th
    assert_allclose(penalized_loglik(spec, g, data, th, [0.7]), direct / n - pen, rtol=1e-12)


def test_loglik_rejects_non_copula_data():
    w = {}
    data = EdgeData(np.array([0.2, np.nan]), np.array([0.3, 0.4]), w)
    with pytest.raises(ValueError):
        penalized_loglik(GamSpec(), "gaussian", data, np.zeros(1))


# ---------------------------------------------------------------------------
# working quantities and ridge


def test_independence_working_response_is_fixed_point(rng):
    w = {"x": rng.uniform(size=25)}
    spec = GamSpec.build(w, smooth=["x"], basis_size=5)
    data = EdgeData(*rng.uniform(size=(2, 25)), w)
    C = _build_design(spec, w).C
    th = C @ rng.standard_normal(C.shape[1])
    wq = working_quantities(spec, "indep", data, th)
    assert_allclose(wq.y, spec.design(w) @ th, atol=1e-12)


def test_working_stationarity_at_intercept_mle(rng):
    u1, u2 = simulate_pair("gaussian", np.full(400, 0.3), rng)
    data = EdgeData(u1, u2, {})
    tau_hat = golden_mle(fam.parse_family("gaussian"), u1, u2)
    wq = working_quantities(GamSpec(), "gaussian", data, [link_inverse(tau_hat)])
    assert abs(np.sum(wq.a * (wq.y - wq.d @ [link_inverse(tau_hat)]) * wq.d[:, 0])) < 1e-8


def test_observed_weights_match_finite_differences(rng):
    n = 60
    w = {"z": rng.standard_normal(n)}
    spec = GamSpec.build(w, linear=["z"])
    u1, u2 = simulate_pair("clayton", np.full(n, 0.4), rng)
    data = EdgeData(u1, u2, w)
    th = np.array([0.8, 0.1])
    wq = working_quantities(spec, "clayton", data, th, weights="observed")
    eta = spec.design(w) @ th
    h = 1e-4
    cl = fam.parse_family("clayton")
    ll = lambda e: fam.logpdf(cl, u1, u2, np.tanh(e / 2))
    fd = -(ll(eta + h) - 2 * ll(eta) + ll(eta - h)) / h**2
    neg = fd > 1e-3
    assert_allclose((wq.a * n)[neg], fd[neg], rtol=1e-4, atol=1e-6)


def test_ridge_gamma_zero_is_weighted_least_squares(rng):
    d = rng.standard_normal((30, 3))
    y = rng.standard_normal(30)
    a = rng.uniform(0.5, 2, 30)
    wq = WorkingQuantities(y, d, a, ((slice(1, 3), np.eye(2)),))
    W = np.sqrt(a)
    ols = np.linalg.lstsq(d * W[:, None], y * W, rcond=None)[0]
    assert_allclose(ridge_step(wq, [0.0]), ols, rtol=1e-10)
    assert_allclose(edf(wq, [0.0]), 3.0, rtol=1e-10)


def test_ridge_toy_normal_equations():
    d = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    y = np.array([1.0, 0.0, 2.0])
    a = np.array([1.0, 2.0, 1.0])
    gamma = 0.5
    wq = WorkingQuantities(y, d, a, ((slice(1, 2), np.array([[1.0]])),))
    # hand-computed: d'ad = [[4, 4], [4, 6]] + [[0, 0], [0, 0.5]], d'ay = [3, 4]
    M = np.array([[4.0, 4.0], [4.0, 6.5]])
    rhs = np.array([3.0, 4.0])
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    hand = np.array([M[1, 1] * rhs[0] - M[0, 1] * rhs[1], M[0, 0] * rhs[1] - M[1, 0] * rhs[0]]) / det
    assert_allclose(ridge_step(wq, [gamma]), hand, rtol=1e-14)


def test_infinite_penalty_leaves_affine_smooth(rng):
    n = 200
    data, _ = _covariate_data(rng, n)
    spec = GamSpec.build(data.w, smooth=["x"], basis_size=8)
    wq = working_quantities(spec, "gaussian", data, np.zeros(spec.p))
    th = wq.constraint @ ridge_step(wq, [1e12])
    s = th[1:]
    y = spec.smooth[0].basis.knots.array
    resid = s - np.polyval(np.polyfit(y, s, 1), y)
    assert np.max(np.abs(resid)) < 1e-8


def test_edf_limits_and_dense_trace(rng):
    n = 20
    d = np.column_stack([np.ones(n), rng.standard_normal((n, 4))])
    y = rng.standard_normal(n)
    a = rng.uniform(0.5, 2, n) / n
    S = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    S[2, 2] = 0.0  # rank-deficient block, like a centered spline penalty
    S = S.T @ S
    wq = WorkingQuantities(y, d, a, ((slice(2, 5), S),))
    for g in (0.0, 0.01, 1.0, 100.0):
        P = wq.penalty([g])
        A = d @ np.linalg.solve(d.T @ (a[:, None] * d) + P, d.T * a)
        assert_allclose(edf(wq, [g]), np.trace(A), rtol=1e-10)
    null_dim = 3 - np.linalg.matrix_rank(S)
    assert_allclose(edf(wq, [1e12]), 2 + null_dim, atol=1e-6)


def test_edf_nonincreasing_in_gamma(rng):
    data, _ = _covariate_data(rng, 300)
    spec = GamSpec.build(data.w, linear=["z"], smooth=["x"], basis_size=10)
    wq = working_quantities(spec, "gaussian", data, np.zeros(spec.p))
    vals = [edf(wq, [g]) for g in np.logspace(-6, 4, 30)]
    assert np.all(np.diff(vals) <= 1e-10)
    assert np.isfinite(gcv(wq, [1.0]))


# ---------------------------------------------------------------------------
# fit


@pytest.mark.parametrize("family", ["gaussian", "t(nu=4)", "clayton", "gumbel@90"])
def test_intercept_fit_matches_golden_section(family, rng):
    spec_f = fam.parse_family(family)
    tau = 0.4 if fam.admissible_range(spec_f)[1] > 0 else -0.4
    u1, u2 = simulate_pair(family, np.full(2000, tau), rng)
    f = fit(GamSpec(), family, EdgeData(u1, u2, {}))
    assert f.converged
    tau_fit = float(f.predict_tau({}))
    assert abs(tau_fit - tau) < 0.03
    assert abs(tau_fit - golden_mle(spec_f, u1, u2)) < 1e-4


def test_independence_fit_is_zero(rng):
    data, _ = _covariate_data(rng, 100)
    spec = GamSpec.build(data.w, linear=["z"], smooth=["x"], basis_size=5)
    f = fit(spec, "indep", data)
    assert_allclose(f.theta, 0.0)
    assert f.edf_total == 0 and f.loglik == 0


def test_fit_stationarity_and_edf_range(rng):
    data, _ = _covariate_data(rng, 600)
    spec = GamSpec.build(data.w, linear=["z", "b"], smooth=["x"], basis_size=10)
    f = fit(spec, "gaussian", data)
    assert f.converged
    assert np.max(np.abs(penalized_score(f, data))) < 1e-5
    # finite-difference gradient in the free coordinates
    C = _build_design(spec, data.w).C
    th = C.T @ f.theta
    h = 1e-6
    for j in range(th.size):
        e = np.zeros_like(th)
        e[j] = h
        up = penalized_loglik(spec, "gaussian", data, C @ (th + e), f.gamma)
        dn = penalized_loglik(spec, "gaussian", data, C @ (th - e), f.gamma)
        assert abs((up - dn) / (2 * h)) < 1e-5
    assert 1.0 - 1e-8 <= f.edf_terms[3] <= spec.smooth[0].m - 1 + 1e-8
    truth = np.sin(2 * np.pi * np.linspace(0.05, 0.95, 19)) / 2
    grid = {"x": np.linspace(0.05, 0.95, 19), "z": np.zeros(19), "b": np.zeros(19)}
    eta = linear_predictor(spec, f.theta, grid) - f.theta[0]
    assert np.max(np.abs((eta - eta.mean()) - (truth - truth.mean()))) < 0.25


def test_monotone_ascent_with_fixed_gamma(rng):
    data, _ = _covariate_data(rng, 400, "gumbel@0/90")
    spec = GamSpec.build(data.w, linear=["z", "b"], smooth=["x"], basis_size=8)
    vals = []
    for k in range(1, 9):
        f = fit(spec, "gumbel@0/90", data, FitOptions(gamma=(0.01,), max_iter=k))
        vals.append(penalized_loglik(spec, "gumbel@0/90", data, f.theta, f.gamma))
    assert np.all(np.diff(vals) >= -1e-10)


@pytest.mark.parametrize("family,n_aux", [("gaussian", 0), ("t(nu=4)", 1), ("clayton@0/270", 0)])
def test_information_criteria(family, n_aux, rng):
    data, _ = _covariate_data(rng, 400, "gaussian")
    spec = GamSpec.build(data.w, linear=["z"], smooth=["x"], basis_size=6)
    f = fit(spec, family, data)
    assert f.aic == -2 * f.loglik + 2 * (f.edf_total + n_aux)
    assert_allclose(f.bic, -2 * f.loglik + np.log(400) * (f.edf_total + n_aux), rtol=1e-14)


def test_fit_round_trip_is_bit_identical(rng):
    data, _ = _covariate_data(rng, 300)
    spec = GamSpec.build(data.w, linear=["z"], smooth=["x"], basis_size=6)
    f = fit(spec, "gaussian", data)
    back = GamFit.from_dict(f.to_dict())
    assert np.array_equal(back.predict_tau(data.w), f.predict_tau(data.w))
    assert np.array_equal(back.covariance, f.covariance)


def test_single_edge_scenario_recovers_coefficients():
    rng = np.random.default_rng(5)
    n = 5000
    w = {f"z{j}": rng.binomial(1, 0.5, n).astype(float) for j in (1, 2, 3, 4)}
    w.update({f"t{k}": rng.uniform(size=n) for k in (1, 2, 3)})
    eta = (w["z1"] + w["z2"] - w["z3"]) / 4 - 0.25 + w["t1"] / 2 + np.sin(2 * np.pi * w["t2"]) / 4 \
        + np.sin(6 * np.pi * w["t3"]) / 4
    u1, u2 = simulate_pair("gaussian", link(eta), rng)
    data = EdgeData(u1, u2, w)
    spec = GamSpec.build(w, linear=["z1", "z2", "z3", "z4"], smooth=["t1", "t2", "t3"], strategy="equidistant")
    f = fit(spec, "gaussian", data)
    se = np.sqrt(np.diag(f.covariance))
    for j, b in zip(range(1, 5), (0.25, 0.25, -0.25, 0.0)):
        assert abs(f.theta[j] - b) < 4 * se[j]
    assert np.all(f.pvalues[1:4] < 0.001)
    assert np.all(f.pvalues[5:] < 0.001)


# ---------------------------------------------------------------------------
# Wald tests


def test_wald_zero_coefficient_has_unit_pvalue(rng):
    data, _ = _covariate_data(rng, 300)
    spec = GamSpec.build(data.w, linear=["z"], smooth=["x"], basis_size=5)
    f = fit(spec, "gaussian", data)
    f.theta = np.zeros_like(f.theta)
    assert_allclose(wald_pvalues(f), 1.0)


def test_wald_size_under_null():
    rng = np.random.default_rng(11)
    rejections = 0
    for _ in range(200):
        n = 300
        w = {"z4": rng.binomial(1, 0.5, n).astype(float)}
        u1, u2 = simulate_pair("gaussian", np.full(n, 0.3), rng)
        f = fit(GamSpec.build(w, linear=["z4"]), "gaussian", EdgeData(u1, u2, w))
        rejections += f.pvalues[1] < 0.05
    assert 0.01 <= rejections / 200 <= 0.12
