import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate
from scipy.interpolate import CubicSpline

from covine.spline import KnotSequence, build_basis, eval_basis, place_knots


def _basis(m, lo=0.0, hi=1.0):
    return build_basis(KnotSequence.from_array(np.linspace(lo, hi, m)))


def _simpson_roughness(knots, s):
    # independent natural cubic spline from scipy
    cs = CubicSpline(knots, s, bc_type="natural")
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        t = np.linspace(a, b, 1001)
        total += integrate.simpson(cs(t, 2) ** 2, x=t)
    return total


def test_penalty_rank_equidistant_ten():
    S = _basis(10).penalty
    ev = np.linalg.eigvalsh(S)
    assert np.sum(ev > 1e-10 * ev.max()) == 8


def test_penalty_exactly_symmetric():
    rng = np.random.default_rng(0)
    S = build_basis(KnotSequence.from_array(np.sort(rng.uniform(size=9)))).penalty
    assert_array_equal(S, S.T)


def test_affine_coefficients_are_unpenalized():
    b = _basis(7, -1, 3)
    y = b.knots.array
    s = 0.3 - 1.7 * y
    assert abs(s @ b.penalty @ s) < 1e-10


@pytest.mark.parametrize("m", range(4, 13))
def test_penalty_matches_quadrature(m):
    rng = np.random.default_rng(m)
    for _ in range(100 // 9 + 1):
        y = np.cumsum(rng.uniform(0.05, 1.0, m))
        b = build_basis(KnotSequence.from_array(y))
        s = rng.standard_normal(y.size)
        assert_allclose(s @ b.penalty @ s, _simpson_roughness(y, s), rtol=1e-6)


def test_quadrature_example_m6():
    rng = np.random.default_rng(6)
    y = np.linspace(0, 1, 6)
    s = rng.standard_normal(6)
    assert_allclose(s @ _basis(6).penalty @ s, _simpson_roughness(y, s), rtol=1e-6)


def test_basis_matches_scipy_natural_spline():
    rng = np.random.default_rng(1)
    y = np.sort(rng.uniform(size=8))
    b = build_basis(KnotSequence.from_array(y))
    s = rng.standard_normal(8)
    t = np.linspace(y[0], y[-1], 57)
    cs = CubicSpline(y, s, bc_type="natural")
    for k in (0, 1, 2):
        assert_allclose(eval_basis(b, t, k) @ s, cs(t, k), rtol=1e-9, atol=1e-8)


def test_cardinal_property_at_knots():
    b = _basis(6)
    assert_allclose(eval_basis(b, b.knots.array), np.eye(6), atol=1e-13)


def test_partition_of_unity():
    b = _basis(9)
    t = np.linspace(-0.5, 1.5, 101)
    assert_allclose(eval_basis(b, t).sum(axis=1), 1.0, atol=1e-12)


def test_linear_beyond_boundary():
    b = _basis(5)
    s = np.array([0.3, -1.0, 2.0, 0.5, -0.2])
    # finite-difference slope at two exterior points agrees
    h = 1e-4
    for a, c in ((1.2, 3.0), (-0.4, -2.5)):
        sa = (eval_basis(b, a + h) - eval_basis(b, a - h)) @ s / (2 * h)
        sc = (eval_basis(b, c + h) - eval_basis(b, c - h)) @ s / (2 * h)
        assert_allclose(sa, sc, atol=1e-8)
    assert_allclose(eval_basis(b, np.array([-3.0, -0.1, 1.1, 7.0]), 2) @ s, 0.0, atol=1e-12)


def test_eval_shape_and_deriv_check():
    b = _basis(4)
    assert eval_basis(b, 0.3).shape == (4,)
    assert eval_basis(b, [0.1, 0.2]).shape == (2, 4)
    with pytest.raises(ValueError):
        eval_basis(b, 0.3, deriv=3)


def test_place_knots_equidistant():
    v = np.linspace(0, 1, 200)
    assert_allclose(place_knots(v, 10, "equidistant").array, np.linspace(0, 1, 10), atol=1e-15)
    assert_allclose(place_knots(v, 3, "equidistant").array, [0, 0.5, 1], atol=1e-15)


def test_place_knots_quantile_median():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(1000)
    k = place_knots(x, 3, "quantile").array
    assert abs(k[1] - np.median(x)) < 2 / np.sqrt(x.size)


def test_place_knots_errors():
    with pytest.raises(ValueError, match="at least 3"):
        place_knots(np.arange(10.0), 2)
    with pytest.raises(ValueError, match="constant"):
        place_knots(np.ones(10), 4, "equidistant")
    with pytest.raises(ValueError, match="distinct"):
        place_knots(np.array([0, 1, 2, 0, 1, 2.0]), 5)
    with pytest.raises(ValueError, match="strategy"):
        place_knots(np.arange(10.0), 4, "random")


def test_knot_sequence_validation():
    with pytest.raises(ValueError):
        KnotSequence.from_array([0, 1])
    with pytest.raises(ValueError):
        KnotSequence.from_array([0, 0.5, 0.5, 1])
    with pytest.raises(ValueError):
        KnotSequence.from_array([0, np.nan, 1])


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 12), st.integers(0, 2**31 - 1))
def test_null_space_is_affine(m, seed):
    rng = np.random.default_rng(seed)
    y = np.cumsum(rng.uniform(0.1, 1.0, m))
    S = build_basis(KnotSequence.from_array(y)).penalty
    ev = np.linalg.eigvalsh(S)
    assert np.sum(ev > 1e-10 * ev.max()) == m - 2
    for v in (np.ones(m), y):
        assert np.max(np.abs(S @ v)) < 1e-9 * ev.max() * (1 + np.abs(y).max())


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 10), st.integers(0, 2**31 - 1))
def test_interpolates_knot_values(m, seed):
    rng = np.random.default_rng(seed)
    y = np.cumsum(rng.uniform(0.1, 1.0, m))
    b = build_basis(KnotSequence.from_array(y))
    s = rng.standard_normal(m)
    assert_allclose(eval_basis(b, y) @ s, s, atol=1e-10)
