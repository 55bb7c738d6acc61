import numpy as np
import pytest

from levelshape.adjoint import feasible_mask
from levelshape.grid import Grid2D, ObservationSet, ScalarField
from levelshape.nonsmooth import relu
from levelshape.optimizer import (ControlProblem, initial_guess, objective_J, objective_jeps, optimize, project_F)
from levelshape.state import EmptyShapeError, StateProblem, solve_state

GRID = Grid2D.from_box(-1, -1, 2, 2, 33)
OBS = ObservationSet.disk(0, 0, 0.2)


def problem(**kw):
    base = dict(grid=GRID, f=ScalarField.constant(GRID, 1.0), y_d=ScalarField.constant(GRID, 0.02), beta=relu(),
                obs=OBS, eps_schedule=(0.1, 0.05), max_iter=15)
    base.update(kw)
    return ControlProblem(**base)


def test_schedule_validation():
    with pytest.raises(ValueError):
        problem(eps_schedule=(0.1, 0.2))
    with pytest.raises(ValueError):
        problem(eps_schedule=())
    with pytest.raises(ValueError):
        problem(alpha=-1.0)
    assert problem(anchor_weight=3.0).anchor_weight == 0.0


def test_project_F_clamps_on_closed_E():
    g = ScalarField.constant(GRID, 1.0)
    pg = project_F(g, OBS)
    m = feasible_mask(GRID, OBS)
    assert np.all(pg.values[m] == 0) and np.all(pg.values[~m] == 1)
    assert np.array_equal(project_F(pg, OBS).values, pg.values)


def test_initial_guess_contains_E():
    g = initial_guess(GRID, OBS)
    assert np.all(g.values[feasible_mask(GRID, OBS)] < 0)
    assert np.all(g.values[GRID.boundary_mask()] > 0)


def test_objective_J_invariant_under_positive_scaling():
    pb = problem(alpha=0.5)
    g = initial_guess(GRID, OBS, radius=0.5)
    assert objective_J(g, pb) == pytest.approx(objective_J(g.with_values(2 * g.values), pb), rel=1e-12)


def test_objective_J_area_term():
    fine = Grid2D.from_box(-1, -1, 2, 2, 129)
    pb = ControlProblem(fine, ScalarField.constant(fine, 0.0), ScalarField.constant(fine, 0.0), relu(), OBS,
                        alpha=1.0)
    parts = objective_J(initial_guess(fine, OBS, radius=0.5), pb, return_parts=True)
    assert parts["tracking"] == 0.0
    assert parts["area"] == pytest.approx(np.pi * 0.25, rel=0.02)


def test_objective_J_rejects_shape_missing_E():
    with pytest.raises(EmptyShapeError):
        objective_J(ScalarField.constant(GRID, 1.0), problem())


def test_objective_jeps_matches_state_solution():
    pb = problem()
    g = initial_guess(GRID, OBS)
    y = solve_state(StateProblem(GRID, pb.f, g, pb.beta, eps=0.1)).y
    assert objective_jeps(g, pb, 0.1) == pytest.approx(objective_jeps(g, pb, 0.1, y), rel=1e-12)


def test_descent_is_monotone_and_feasible():
    pb = problem(alpha=0.2)
    res = optimize(pb, initial_guess(GRID, OBS, radius=0.6))
    for hist in res.objective_history:
        assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert np.all(res.g_opt.values[feasible_mask(GRID, OBS)] <= 0)
    assert res.iterations > 0
    assert res.status in ("converged", "max_iter", "stalled")
    assert res.log[0]["iter"] == 0 and len(res.stages) == 2


def test_stationary_start_takes_no_steps():
    g0 = initial_guess(GRID, OBS, radius=0.6)
    y = solve_state(StateProblem(GRID, ScalarField.constant(GRID, 1.0), g0, relu(), eps=0.05)).y
    res = optimize(problem(y_d=y, eps_schedule=(0.05,)), g0)
    assert res.iterations == 0
    assert res.status == "converged"
    assert res.vi_residual == 0.0


def test_callback_sees_every_iteration():
    seen = []
    res = optimize(problem(max_iter=3, eps_schedule=(0.1,)), callback=seen.append)
    assert len(seen) == len(res.log)
