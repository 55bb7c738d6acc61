import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from levelshape.curves import (ClosureError, DriftError, GeometryError, PreconditionError, check_admissibility,
                               coarea_check, convergence_suite, curvilinear_integral, dirac_limit_check, find_seeds,
                               hausdorff_distance, level_integral, read_curve, trace_curve, trace_level, write_curve)
from levelshape.grid import Grid2D, ObservationSet, ScalarField

GRID = Grid2D.from_box(-1, -1, 2, 2, 129)


def field(fn, grid=GRID):
    return ScalarField.from_function(grid, fn)


def circle(r=0.5, cx=0.0, cy=0.0):
    return field(lambda x, y: (x - cx) ** 2 + (y - cy) ** 2 - r * r)


def test_circle_period_and_length():
    r = 0.5
    fam = trace_level(circle(r), 0.0)
    assert len(fam) == 1
    cv = fam[0]
    # |grad g| = 2r on the circle so T = 2 pi r / (2 r) = pi
    assert abs(cv.period - math.pi) < 1e-9
    assert abs(cv.length - 2 * math.pi * r) < 1e-9
    assert abs(curvilinear_integral(cv, 1.0, "arc") - 2 * math.pi * r) < 1e-9
    npt.assert_allclose(np.hypot(cv.x, cv.y), r, atol=1e-9)


def test_ellipse_period():
    a, b = 0.6, 0.3
    g = field(lambda x, y: (x / a) ** 2 + (y / b) ** 2 - 1.0)
    cv = trace_level(g, 0.0)[0]
    # T = d/dc area{g < c} = pi a b
    assert abs(cv.period - math.pi * a * b) / (math.pi * a * b) < 1e-8


def test_curvilinear_integral_x1_squared():
    r = 0.5
    cv = trace_level(circle(r), 0.0)[0]
    # int x1^2 / |grad g| = (1/(2r)) * pi r^3
    val = curvilinear_integral(cv, lambda x, y: x**2, "inv_grad")
    assert abs(val - math.pi * r**2 / 2) < 1e-9


def test_two_components_found_and_traced():
    g = field(lambda x, y: np.minimum((x + 0.45) ** 2 + y**2, (x - 0.45) ** 2 + y**2) - 0.04)
    fam = trace_level(g, 0.0)
    assert len(fam) == 2
    for cv in fam:
        assert abs(cv.period - math.pi) < 1e-4  # kink of min between the disks is far away
    assert fam.min_pairwise_distance() == pytest.approx(0.5, abs=2e-3)


def test_seed_on_level_and_outside_E():
    obs = ObservationSet.disk(0, 0, 0.2)
    seeds = find_seeds(circle(0.5), 0.0, obs)
    assert len(seeds) == 1
    ip = circle(0.5).interpolant()
    assert abs(float(ip(*seeds[0]))) < 1e-13


def test_retrace_is_stable():
    g = circle(0.5)
    a = trace_level(g, 0.0)[0]
    b = trace_curve(g, (a.x[37], a.y[37]))
    assert abs(a.period - b.period) < 1e-10
    assert hausdorff_distance(a, b) < 1e-8


def test_polygon_length_below_arc_length():
    cv = trace_level(circle(0.5), 0.0)[0]
    assert cv.polygon_length() <= cv.length
    assert cv.length - cv.polygon_length() < 1e-4


def test_hausdorff_concentric_and_translated():
    a = trace_level(circle(0.4), 0.0)[0]
    b = trace_level(circle(0.41), 0.0)[0]
    c = trace_level(circle(0.4, 0.03, 0.0), 0.0)[0]
    assert hausdorff_distance(a, b) == pytest.approx(0.01, abs=1e-7)
    assert hausdorff_distance(a, c) == pytest.approx(0.03, abs=1e-7)
    assert hausdorff_distance(a, b) == hausdorff_distance(b, a)
    assert hausdorff_distance(a, a) < 1e-12


def test_hausdorff_triangle_inequality():
    cs = [trace_level(circle(r, cx, 0.0), 0.0)[0] for r, cx in ((0.4, 0.0), (0.42, 0.05), (0.38, -0.03))]
    dab = hausdorff_distance(cs[0], cs[1])
    dbc = hausdorff_distance(cs[1], cs[2])
    dac = hausdorff_distance(cs[0], cs[2])
    assert dac <= dab + dbc + 1e-12


def test_precondition_errors():
    g = circle(0.5)
    with pytest.raises(PreconditionError):
        trace_curve(g, (2.0, 0.0))
    with pytest.raises(PreconditionError):
        trace_curve(g, (0.0, 0.0))  # grad g = 0 at the center
    with pytest.raises(PreconditionError):
        trace_curve(g, (0.1, 0.0), obs=ObservationSet.disk(0, 0, 0.2))


def test_open_level_leaves_grid():
    g = field(lambda x, y: x - 0.1)
    with pytest.raises(GeometryError):
        trace_curve(g, (0.1, 0.0))


def test_drift_and_closure_limits():
    g = circle(0.5)
    with pytest.raises(DriftError):
        trace_curve(g, (0.5, 0.0), step_fraction=2.0, trace_tol=1e-14)
    with pytest.raises(ClosureError):
        trace_curve(g, (0.5, 0.0), max_steps=10)


def test_curve_entering_E_is_rejected():
    g = circle(0.5)
    with pytest.raises(GeometryError):
        trace_curve(g, (0.5, 0.0), obs=ObservationSet.disk(0.0, 0.45, 0.1))


def test_admissibility_certificate():
    obs = ObservationSet.disk(0, 0, 0.2)
    cert = check_admissibility(circle(0.5), obs)
    assert cert.admissible and cert.strict
    assert cert.boundary_min > 0 and cert.e_max < 0
    bad = check_admissibility(circle(0.1), obs)
    assert not bad.admissible
    # a saddle through a level node destroys the gradient bound there
    flat = check_admissibility(field(lambda x, y: x * y + 2.0))
    assert flat.delta > 0


def test_coarea_identity_holds_up_to_quadrature():
    out = coarea_check(circle(0.5), 0.1, 1.0)
    assert out["gap"] < 1e-3
    out2 = coarea_check(circle(0.5), 0.1, lambda x, y: x**2)
    assert out2["gap"] < 1e-3


def test_level_integral_constant_one_is_period():
    assert level_integral(circle(0.5), 0.0, 1.0) == pytest.approx(math.pi, abs=1e-9)


def test_dirac_limit_converges():
    out = dirac_limit_check(lambda e: circle(0.5), circle(0.5), lambda x, y: x**2, [0.2, 0.1, 0.05])
    assert out["nonincreasing"]
    assert out["rows"][-1]["error"] < out["rows"][0]["error"]


def test_convergence_suite_offset_family():
    eps_list = [0.05, 0.025, 0.0125]
    g0 = circle(0.5)
    out = convergence_suite(lambda e: g0.with_values(g0.values + e * (1 + g0.values) ** 2), g0, eps_list)
    assert out["counts_match"] and out["tube_ok"]
    assert out["hausdorff_decreasing"]
    assert out["period_decreasing"]
    assert out["trajectory_decreasing"]


def test_curve_file_round_trip(tmp_path):
    cv = trace_level(circle(0.5), 0.0)[0]
    path, side = write_curve(tmp_path / "c" / "boundary_0.csv", cv)
    data, meta = read_curve(path)
    assert np.array_equal(data, cv.samples)
    assert meta["period"] == cv.period and meta["component_id"] == 0
    with pytest.raises(FileNotFoundError, match="missing.csv"):
        read_curve(tmp_path / "missing.csv")


@settings(max_examples=8, deadline=None)
@given(st.floats(0.2, 0.7), st.floats(-0.15, 0.15), st.floats(-0.15, 0.15))
def test_circle_period_property(r, cx, cy):
    cv = trace_level(circle(r, cx, cy), 0.0)[0]
    assert abs(cv.period - math.pi) < 1e-8
    assert abs(cv.length - 2 * math.pi * r) < 1e-8
