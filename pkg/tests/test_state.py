import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levelshape.grid import Grid2D, ScalarField
from levelshape.nonsmooth import relu, shifted_kink
from levelshape.state import (EmptyShapeError, SolverError, StateProblem, compare_penalized_masked, penalty_energy,
                              residual, solve_semilinear, solve_state)

from conftest import circle


def manufactured_error(n):
    g = Grid2D.from_box(0, 0, 1, 1, n)
    exact = ScalarField.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    f = exact.with_values(2 * np.pi**2 * exact.values + np.maximum(exact.values, 0))
    sol = solve_state(StateProblem(g, f, ScalarField.constant(g, -1.0), relu(), eps=1.0, include_eg=False))
    return np.max(np.abs(sol.y.values - exact.values))


def test_manufactured_second_order():
    e1, e2 = manufactured_error(33), manufactured_error(65)
    assert 3.5 <= e1 / e2 <= 4.5


def test_zero_data_gives_zero_state(square65):
    g = circle(square65)
    sol = solve_state(StateProblem(square65, ScalarField.constant(square65, 0.0), g, relu(), include_eg=False))
    assert np.all(sol.y.values == 0)
    assert sol.penalty_energy == 0.0


def test_residual_below_tolerance(square65):
    g = circle(square65)
    p = StateProblem(square65, ScalarField.constant(square65, 1.0), g, shifted_kink(0.02), eps=0.05)
    sol = solve_state(p)
    assert np.max(np.abs(residual(p, sol.y))) <= 1e-9
    assert np.all(sol.y.values[square65.boundary_mask()] == 0)


def test_penalty_energy_decays(square65):
    g = circle(square65, 0.3)
    f = ScalarField.constant(square65, 1.0)
    en = [solve_state(StateProblem(square65, f, g, relu(), eps=e, include_eg=False)).penalty_energy
          for e in (0.1, 0.05, 0.025)]
    assert en[0] / en[1] >= 1.5 and en[1] / en[2] >= 1.5


def test_penalized_approaches_masked(square65):
    rows = compare_penalized_masked(circle(square65, 0.3), ScalarField.constant(square65, 1.0), relu(),
                                    [0.1, 0.05, 0.025])
    errs = [r["l2_error_inside"] for r in rows]
    mass = [r["exterior_mass"] for r in rows]
    assert errs[0] > errs[1] > errs[2]
    assert mass[0] > mass[1] > mass[2]


def test_masked_mode_needs_nonempty_shape(square65):
    with pytest.raises(EmptyShapeError):
        solve_state(StateProblem(square65, ScalarField.constant(square65, 1.0), ScalarField.constant(square65, 1.0),
                                 relu(), mode="masked"))


def test_masked_solution_vanishes_outside(square65):
    g = circle(square65, 0.4)
    y = solve_state(StateProblem(square65, ScalarField.constant(square65, 1.0), g, relu(), mode="masked")).y
    assert np.all(y.values[g.values >= 0] == 0)
    assert np.all(y.values[g.values < 0] > 0)


def test_solver_error_carries_residual():
    import scipy.sparse as sp
    A = sp.identity(3, format="csc")
    with pytest.raises(SolverError) as info:
        solve_semilinear(A, relu(), np.zeros(3), np.ones(3), tol=1e-300, max_iter=0)
    assert info.value.residual > 0


def test_penalty_energy_zero_inside_shape(square65):
    g = ScalarField.constant(square65, -1.0)
    assert penalty_energy(ScalarField.constant(square65, 3.0), g, 0.1) == 0.0


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_comparison_principle(a, b):
    grid = Grid2D.from_box(-1, -1, 2, 2, 17)
    g = circle(grid, 0.6)
    lo, hi = sorted((a, b))
    f_lo = ScalarField.constant(grid, lo - 1.0)
    f_hi = ScalarField.constant(grid, hi - 1.0)
    y_lo = solve_state(StateProblem(grid, f_lo, g, relu(), eps=0.05)).y
    y_hi = solve_state(StateProblem(grid, f_hi, g, relu(), eps=0.05)).y
    assert np.all(y_hi.values >= y_lo.values - 1e-12)


def test_zero_forcing_on_zero_shape_function(square65):
    zero = ScalarField.constant(square65, 0.0)
    sol = solve_state(StateProblem(square65, zero, zero, relu(), eps=0.1))
    assert np.all(sol.y.values == 0)
