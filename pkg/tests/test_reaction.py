import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import polynomial as P

from spde_bayes.reaction import (
    BumpReaction,
    CallableReaction,
    CoefficientReaction,
    ConstantReaction,
    ZeroReaction,
    allen_cahn_truncated,
    lipschitz_constant,
    reaction_from_config,
    truncated_polynomial,
)
from spde_bayes.wavelets import build_haar

F0 = allen_cahn_truncated()


def test_allen_cahn_values():
    assert ZeroReaction()(1.7) == 0
    assert F0(np.array([1.0]))[0] == pytest.approx(8.0, abs=1e-12)
    assert F0(np.array([3.6, -3.6, 3.5, 10.0])).tolist() == [0.0, 0.0, 0.0, 0.0]
    assert F0(np.array([0.0]))[0] == 0.0
    assert F0.derivative()(np.array([0.0]))[0] == pytest.approx(9.0, abs=1e-12)
    assert F0(np.array([3.25]))[0] == pytest.approx(-5.078125, abs=1e-12)
    assert F0(np.array([-3.25]))[0] == pytest.approx(5.078125, abs=1e-12)


def _one_sided(model, knot):
    """Left and right limits at ``knot`` from the piece polynomials themselves."""
    lo, hi = model.core
    a, b = model.outer
    if knot == hi:
        return P.polyval(hi, model.core_coeffs), P.polyval(0.0, model.right_tail)
    if knot == lo:
        return P.polyval(0.0, model.left_tail), P.polyval(lo, model.core_coeffs)
    if knot == b:
        return P.polyval(b - hi, model.right_tail), 0.0
    return 0.0, P.polyval(a - lo, model.left_tail)


@pytest.mark.parametrize("knot", [-3.5, -3.25, 3.25, 3.5])
def test_c3_smoothness_at_knots(knot):
    for order in range(4):
        d = F0 if order == 0 else F0.derivative(order)
        left, right = _one_sided(d, knot)
        assert abs(left - right) <= 1e-6 * max(1.0, abs(left))


@pytest.mark.parametrize("knot", [-3.5, -3.25, 3.25, 3.5])
def test_c3_smoothness_finite_differences(knot):
    # the jump of f^(k) across the knot, Richardson-extrapolated to h -> 0; the fourth
    # derivative jumps by ~2e6 so the raw jump at finite h is O(h) and must be removed
    for order in range(4):
        d = F0 if order == 0 else F0.derivative(order)

        def jump(h):
            return d(np.array([knot + h]))[0] - d(np.array([knot - h]))[0]

        h = 1e-7
        assert abs(2 * jump(h) - jump(2 * h)) <= 1e-6 * max(1.0, abs(d(np.array([knot]))[0]))


def test_allen_cahn_is_odd():
    x = np.linspace(-4, 4, 1001)
    np.testing.assert_allclose(F0(-x), -F0(x), atol=1e-12)


def test_lipschitz_examples():
    assert lipschitz_constant(ZeroReaction()) == 0
    assert lipschitz_constant(ConstantReaction(-2.5)) == pytest.approx(2.5)
    x = np.linspace(-3.5, 3.5, 700001)
    slope = np.abs(F0.derivative()(x)).max()
    L = lipschitz_constant(F0)
    sup = np.abs(F0(x)).max()
    assert slope + sup - 1e-2 <= L <= slope + sup + 1e-2


def test_coefficient_model_examples():
    b = build_haar(M=1)
    assert np.all(CoefficientReaction(b, np.zeros(b.dim))(np.linspace(-4, 4, 9)) == 0)
    x = np.linspace(-3.4, 3.4, 11)
    for i in range(b.dim):
        e = np.zeros(b.dim)
        e[i] = 1
        np.testing.assert_array_equal(CoefficientReaction(b, e)(x), b.evaluate_one(i, x))
    ones = CoefficientReaction(b, np.ones(b.dim))(x)
    np.testing.assert_allclose(ones, sum(b.evaluate_one(i, x) for i in range(b.dim)), atol=1e-15)
    with pytest.raises(ValueError):
        CoefficientReaction(b, np.ones(b.dim + 1))


def test_bump_properties():
    g = BumpReaction(0.5, 2.0, 3.0)
    assert g(np.array([0.5]))[0] == pytest.approx(3.0)
    assert np.all(g(np.array([-1.5, 2.5, 7.0])) == 0)
    x = np.linspace(-1.4, 2.4, 41)
    h = 1e-6
    np.testing.assert_allclose(g.derivative(x), (g(x + h) - g(x - h)) / (2 * h), atol=1e-5)
    assert g.l1_norm() == pytest.approx(3.0 * 2.0 * np.e * 0.4439938, rel=1e-5)


nums = st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 3))


@given(st.sampled_from(["zero", "constant", "bump", "allen_cahn", "poly"]), nums, nums, st.floats(0.1, 3))
@settings(max_examples=60, deadline=None)
def test_config_round_trip(kind, a, b, r):
    if kind == "zero":
        m = ZeroReaction()
    elif kind == "constant":
        m = ConstantReaction(a)
    elif kind == "bump":
        m = BumpReaction(a, r, b)
    elif kind == "allen_cahn":
        m = F0
    else:
        m = truncated_polynomial((a, b, 0.0, -1.0))
    m2 = reaction_from_config(m.to_config())
    x = np.linspace(-4, 4, 201)
    np.testing.assert_array_equal(m(x), m2(x))


def test_config_rejects_unknown_kind():
    with pytest.raises(ValueError):
        reaction_from_config({"kind": "cubic"})
    with pytest.raises(NotImplementedError):
        CallableReaction(np.sin).to_config()
