import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from levelshape import _pykernels as py
from levelshape import kernels
from levelshape.grid import Grid2D, ScalarField

try:
    from levelshape import _ckernels as cy
except ImportError:  # pragma: no cover
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled kernels not built")

GRID = Grid2D.from_box(-1, -1, 2, 2, 33)
IP = ScalarField.from_function(GRID, lambda x, y: x**2 + 0.5 * y**2 + 0.1 * np.sin(3 * x) - 0.2).interpolant()
ARGS = (IP.coef, GRID.x0, GRID.y0, GRID.hx, GRID.hy)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


@needs_cython
@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=20))
def test_eval_parity(pts):
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    for a, b in zip(py.eval_bicubic(*ARGS, xs, ys), cy.eval_bicubic(*ARGS, xs, ys)):
        npt.assert_allclose(a, b, rtol=1e-13, atol=1e-14)


@needs_cython
def test_trace_parity():
    a = py.trace_closed(*ARGS, 0.5, 0.0, 0.1 * GRID.hx, np.inf, 100000, 0.25 * GRID.hx)
    b = cy.trace_closed(*ARGS, 0.5, 0.0, 0.1 * GRID.hx, np.inf, 100000, 0.25 * GRID.hx)
    assert a[0] == b[0] == kernels.CLOSED
    for u, v in zip(a[1:], b[1:]):
        npt.assert_allclose(u, v, rtol=1e-11, atol=1e-12)


@needs_cython
def test_fixed_step_and_single_step_parity():
    a = py.rk4_fixed(*ARGS, 0.5, 0.0, 1e-3, 500)
    b = cy.rk4_fixed(*ARGS, 0.5, 0.0, 1e-3, 500)
    assert a[0] == b[0]
    npt.assert_allclose(a[1], b[1], atol=1e-12)
    npt.assert_allclose(py.rk4_step(*ARGS, 0.3, 0.1, 0.01), cy.rk4_step(*ARGS, 0.3, 0.1, 0.01), atol=1e-14)


@needs_cython
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_polyline_distance_parity(seed):
    r = np.random.default_rng(seed)
    px, py_, qx, qy = (r.uniform(-1, 1, 17) for _ in range(4))
    a = py.polyline_distance(px, py_, qx, qy)
    b = cy.polyline_distance(px, py_, qx, qy)
    npt.assert_allclose(a[0], b[0], atol=1e-14)
    npt.assert_array_equal(a[1], b[1])


def test_polyline_distance_square():
    qx = np.array([0.0, 1.0, 1.0, 0.0])
    qy = np.array([0.0, 0.0, 1.0, 1.0])
    d, seg, t = kernels.polyline_distance(np.array([0.5, 2.0, 0.5]), np.array([-1.0, 0.5, 0.5]), qx, qy)
    npt.assert_allclose(d, [1.0, 1.0, 0.5])
    assert seg[0] == 0 and t[0] == pytest.approx(0.5)


def test_leaving_grid_status():
    ip = ScalarField.from_function(GRID, lambda x, y: x).interpolant()
    st_, *_ = kernels.trace_closed(ip.coef, GRID.x0, GRID.y0, GRID.hx, GRID.hy, 0.0, 0.0, 0.01, np.inf, 10000, 0.01)
    assert st_ == kernels.LEFT_GRID


def test_pure_python_fallback_selected_by_env():
    import subprocess
    import sys
    code = ("from levelshape import kernels; from levelshape.grid import Grid2D, ScalarField;"
            "from levelshape.curves import trace_level;"
            "g = ScalarField.from_function(Grid2D.from_box(-1, -1, 2, 2, 33), lambda x, y: x**2 + y**2 - 0.25);"
            "print(kernels.BACKEND, repr(trace_level(g)[0].period))")
    out = subprocess.run([sys.executable, "-c", code], env={"LEVELSHAPE_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True).stdout.split()
    assert out[0] == "python"
    assert abs(float(out[1]) - np.pi) < 1e-8
