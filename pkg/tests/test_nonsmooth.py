import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from levelshape.nonsmooth import (NonsmoothFn, ParameterError, clarke_interval, heaviside_deriv, heaviside_eval,
                                  heaviside_sharp, identity, make_beta, psi_eval, psi_integral, relu, shifted_kink)


def test_relu_values_and_one_sided_derivatives():
    b = relu()
    npt.assert_array_equal(b.eval([-2.0, 0.0, 3.0]), [0.0, 0.0, 3.0])
    assert b.dplus(0.0) == 1.0 and b.dminus(0.0) == 0.0
    assert b.nonsmooth_points == (0.0,) and b.all_convex
    assert b.directional(0.0, -2.0) == 0.0 and b.directional(0.0, 2.0) == 2.0


def test_shifted_kink():
    b = shifted_kink(1.0)
    npt.assert_allclose(b.eval([0.5, 1.0, 2.0]), [0.5, 1.0, 3.0])
    assert b.dminus(1.0) == 1.0 and b.dplus(1.0) == 2.0


def test_identity_has_no_kinks():
    b = identity()
    assert b.kinks == ()
    npt.assert_allclose(b.eval([-1.5, 2.0]), [-1.5, 2.0])


def test_clarke_interval_at_kink_and_smooth_points():
    lo, hi = clarke_interval(relu(), np.array([-1.0, 0.0, 2.0]))
    npt.assert_array_equal(lo, [0, 0, 1])
    npt.assert_array_equal(hi, [0, 1, 1])


def test_parameter_errors():
    with pytest.raises(ParameterError):
        NonsmoothFn((0.0,), (1.0,))
    with pytest.raises(ParameterError):
        NonsmoothFn((0.0,), (1.0, -1.0))
    with pytest.raises(ParameterError):
        NonsmoothFn((1.0, 0.0), (0.0, 1.0, 2.0))
    with pytest.raises(ParameterError):
        heaviside_eval(0.0, 1.0)
    with pytest.raises(ParameterError):
        make_beta("cubic")


def test_make_beta_piecewise_linear():
    b = make_beta("piecewise_linear", {"breakpoints": [-1.0, 1.0], "slopes": [0.0, 1.0, 3.0]})
    npt.assert_allclose(b.eval([-2.0, 0.0, 2.0]), [-1.0, 0.0, 4.0])
    assert len(b.kinks) == 2 and b.kinks[0].radius == 1.0


def test_heaviside_branches():
    eps = 0.1
    assert heaviside_eval(eps, -0.3) == 0.0
    assert heaviside_eval(eps, 0.3) == 1.0
    assert heaviside_eval(eps, eps / 2) == pytest.approx(0.5)
    assert heaviside_deriv(eps, eps / 2) == pytest.approx(1.5 / eps)
    npt.assert_array_equal(heaviside_sharp([-1.0, 0.0, 1e-9]), [0.0, 0.0, 1.0])


def test_psi_integral_is_one():
    assert abs(psi_integral() - 1.0) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_heaviside_monotone_and_bounded(eps, a, b):
    lo, hi = min(a, b), max(a, b)
    H = heaviside_eval(eps, np.array([lo, hi]))
    assert 0.0 <= H[0] <= H[1] <= 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(-1.0, 2.0))
def test_heaviside_derivative_is_scaled_bump(eps, v):
    assert heaviside_deriv(eps, v) == pytest.approx(psi_eval(v / eps) / eps, rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(-0.5, 1.5))
def test_heaviside_derivative_matches_difference_quotient(eps, s):
    v = s * eps
    d = 1e-7 * eps
    fd = (heaviside_eval(eps, v + d) - heaviside_eval(eps, v - d)) / (2 * d)
    assert fd == pytest.approx(heaviside_deriv(eps, v), abs=1e-5 / eps)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4, unique=True), st.data())
def test_piecewise_linear_monotone_and_continuous(bps, data):
    bps = sorted(bps)
    if any(b - a < 1e-3 for a, b in zip(bps, bps[1:])):
        return
    slopes = data.draw(st.lists(st.floats(0, 5), min_size=len(bps) + 1, max_size=len(bps) + 1))
    f = NonsmoothFn(tuple(bps), tuple(slopes))
    z = np.linspace(-6, 6, 401)
    v = f.eval(z)
    assert np.all(np.diff(v) >= -1e-12)
    for b in bps:
        assert f.eval(b - 1e-9) == pytest.approx(f.eval(b + 1e-9), abs=1e-7)
    lo, hi = clarke_interval(f, z)
    assert np.all(lo <= hi)
