"""Projected Sobolev-gradient descent on the penalized reduced objective with eps-continuation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjoint import WMetric, assemble_gradient, feasible_mask, observation_mask, solve_adjoint, vi_residual
from .grid import Grid2D, ObservationSet, ScalarField
from .nonsmooth import NonsmoothFn, heaviside_eval
from .state import EmptyShapeError, SolverError, StateProblem, solve_state

DEFAULT_SCHEDULE = (1e-1, 5e-2, 2e-2, 1e-2, 5e-3)


@dataclass
class ControlProblem:
    grid: Grid2D
    f: ScalarField
    y_d: ScalarField
    beta: NonsmoothFn
    obs: ObservationSet | None = None
    alpha: float = 0.0
    g_sh: ScalarField | None = None
    anchor_weight: float = 0.0
    eps_schedule: tuple = DEFAULT_SCHEDULE
    step0: float = 1.0
    armijo_c: float = 1e-4
    max_iter: int = 200
    tol: float = 1e-6
    max_backtrack: int = 30
    max_move: float = 1.0
    zeta_rule: str = "plus"
    include_eg: bool = True

    def __post_init__(self):
        sched = [float(e) for e in self.eps_schedule]
        if not sched or any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("eps_schedule must be strictly decreasing and positive")
        self.eps_schedule = tuple(sched)
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.g_sh is None:
            self.anchor_weight = 0.0
        self._metric = None

    @property
    def metric(self) -> WMetric:
        if self._metric is None:
            self._metric = WMetric(self.grid, self.obs)
        return self._metric


@dataclass
class OptimizeResult:
    g_opt: ScalarField
    y_opt: ScalarField
    p_opt: ScalarField
    objective_history: list
    vi_residual: float
    eps_used: float
    status: str = "converged"
    iterations: int = 0
    log: list = field(default_factory=list)
    stages: list = field(default_factory=list)


def _state(problem: ControlProblem, g: ScalarField, eps: float, y0=None):
    sp = StateProblem(problem.grid, problem.f, g, problem.beta, eps=eps, include_eg=problem.include_eg)
    return solve_state(sp, y0).y


def objective_parts(g: ScalarField, problem: ControlProblem, eps: float, y: ScalarField | None = None):
    """Tracking, area and anchor terms of the penalized objective."""
    y = _state(problem, g, eps) if y is None else y
    grid = problem.grid
    w = grid.weights()
    chi = observation_mask(grid, problem.obs)
    track = float(np.sum(w * chi * (y.values - problem.y_d.values) ** 2))
    area = problem.alpha * float(np.sum(w * (1.0 - heaviside_eval(eps, g.values))))
    anchor = 0.0
    if problem.anchor_weight and problem.g_sh is not None:
        anchor = 0.5 * problem.anchor_weight * problem.metric.norm2(g.values - problem.g_sh.values)
    return {"tracking": track, "area": area, "anchor": anchor, "total": track + area + anchor}


def objective_jeps(g: ScalarField, problem: ControlProblem, eps: float, y: ScalarField | None = None) -> float:
    return objective_parts(g, problem, eps, y)["total"]


def objective_J(g: ScalarField, problem: ControlProblem, return_parts: bool = False):
    """Sharp objective: masked state on ``{g < 0}`` plus ``alpha`` times the nodal area of ``{g <= 0}``."""
    grid = problem.grid
    if problem.obs is not None:
        emask = problem.obs.node_mask(grid, closed=True) & grid.interior_mask()
        if np.any(g.values[emask] >= 0):
            raise EmptyShapeError("the shape {g < 0} does not contain E")
    y = solve_state(StateProblem(grid, problem.f, g, problem.beta, eps=1.0, mode="masked")).y
    w = grid.weights()
    chi = observation_mask(grid, problem.obs)
    track = float(np.sum(w * chi * (y.values - problem.y_d.values) ** 2))
    area = float(np.sum(w * (g.values <= 0)))
    total = track + problem.alpha * area
    if return_parts:
        return {"tracking": track, "area": area, "total": total}
    return total


def project_F(g: ScalarField, obs: ObservationSet | None) -> ScalarField:
    """Nodal clamp ``g <- min(g, 0)`` on the closure of ``E``."""
    emask = feasible_mask(g.grid, obs)
    return g.with_values(np.where(emask, np.minimum(g.values, 0.0), g.values))


def initial_guess(grid: Grid2D, obs: ObservationSet | None, radius: float | None = None, center=None,
                  amplitude: float = 1.0) -> ScalarField:
    """``a (|x - c|^2 - R^2) / (2R)``: negative on a disk containing ``E``.

    The amplitude ``a`` sets ``|grad g|`` on the circle and so the width
    ``eps / a`` of the penalty band.
    """
    if center is None:
        center = (0.5 * (grid.x0 + grid.x1), 0.5 * (grid.y0 + grid.y1)) if obs is None else obs.params[:2]
    if radius is None:
        half = 0.5 * min(grid.x1 - grid.x0, grid.y1 - grid.y0)
        radius = 0.5 * half
        if obs is not None:
            a, b, c, d = obs.bbox()
            reach = max(np.hypot(a - center[0], c - center[1]), np.hypot(b - center[0], d - center[1]))
            radius = max(radius, 1.5 * reach)
    cx, cy = center
    return ScalarField.from_function(
        grid, lambda x, y: amplitude * ((x - cx) ** 2 + (y - cy) ** 2 - radius**2) / (2 * radius))


class _Evaluator:
    """State, adjoint and gradient at one iterate for a fixed eps."""

    def __init__(self, problem: ControlProblem, eps: float):
        self.problem = problem
        self.eps = eps

    def value(self, g, y0=None):
        y = _state(self.problem, g, self.eps, y0)
        return objective_jeps(g, self.problem, self.eps, y), y

    def gradient(self, g, y):
        pb = self.problem
        adj = solve_adjoint(y, g, pb.y_d, pb.beta, self.eps, pb.obs, pb.zeta_rule)
        gd = assemble_gradient(adj.p, y, g, pb.g_sh, self.eps, pb.alpha, pb.metric)
        G = gd.total(pb.anchor_weight).values
        dual = pb.metric.mass * gd.l2_part.flat
        if pb.anchor_weight:
            dual = dual + pb.anchor_weight * pb.metric.apply(gd.anchor.values)
        return adj.p, G, dual


def optimize(problem: ControlProblem, g0: ScalarField | None = None, callback=None) -> OptimizeResult:
    """Armijo-projected Sobolev gradient descent over the eps schedule.

    Every accepted step satisfies ``j(g_new) <= j(g) + c * grad.(g_new - g)``
    and keeps ``g <= 0`` on the closure of ``E``.
    """
    pb = problem
    g = project_F(g0 if g0 is not None else initial_guess(pb.grid, pb.obs), pb.obs)
    metric = pb.metric
    y = None
    history, log, stages = [], [], []
    status = "converged"
    total_iter = 0
    res = np.inf
    p = None
    for stage, eps in enumerate(pb.eps_schedule):
        ev = _Evaluator(pb, eps)
        J, y = ev.value(g, y)
        hist = [J]
        step = pb.step0
        stage_status = "converged"
        it = 0
        while True:
            p, G, dual = ev.gradient(g, y)
            res = vi_residual(g, G, pb.obs)
            log.append({"stage": stage, "iter": it, "eps": eps, "objective": J, "vi_residual": res,
                        "step": 0.0 if it == 0 else step})
            if callback is not None:
                callback(log[-1])
            if res <= pb.tol:
                break
            if it >= pb.max_iter:
                stage_status = "max_iter"
                break
            d = metric.solve(dual).reshape(pb.grid.shape)
            accepted = False
            # move limit: no nodal change larger than max_move * eps per step
            s_cap = pb.max_move * eps / max(float(np.max(np.abs(d))), 1e-300) if pb.max_move else np.inf
            s = min(2.0 * step if it else step, s_cap)
            for _ in range(pb.max_backtrack):
                trial = project_F(g.with_values(g.values - s * d), pb.obs)
                decrease = float(dual @ (trial.values - g.values).ravel())
                if decrease >= 0:
                    s *= 0.5
                    continue
                try:
                    Jt, yt = ev.value(trial, y)
                except SolverError:
                    s *= 0.5
                    continue
                if Jt <= J + pb.armijo_c * decrease:
                    accepted = True
                    break
                s *= 0.5
            if not accepted:
                stage_status = "stalled"
                break
            g, y, J, step = trial, yt, Jt, s
            hist.append(J)
            it += 1
            total_iter += 1
        history.append(hist)
        stages.append({"stage": stage, "eps": eps, "iterations": it, "objective": J, "vi_residual": res,
                       "status": stage_status, "area": float(np.sum(pb.grid.weights() * (g.values <= 0))),
                       "anchor_distance": None if pb.g_sh is None else
                       float(np.sqrt(np.sum(pb.grid.weights() * (g.values - pb.g_sh.values) ** 2)))})
        status = stage_status
    return OptimizeResult(g, y, p, history, float(res), pb.eps_schedule[-1], status, total_iter, log, stages)
