"""Adjoint state, gradient assembly, and checks of the first-order optimality system."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import Grid2D, ObservationSet, ScalarField, laplacian, laplacian_matrix, neg_laplacian_dirichlet, region_mask
from .nonsmooth import NonsmoothFn, heaviside_deriv, heaviside_eval
from .state import StateProblem, solve_state

ZETA_RULES = ("plus", "minus", "midpoint")
HOLDS, FAILS, NOT_APPLICABLE = "holds", "fails", "not-applicable"


@dataclass
class AdjointSolution:
    p: ScalarField
    zeta: ScalarField
    rule: str
    residual_norm: float = 0.0


@dataclass
class GradientData:
    l2_part: ScalarField
    anchor: ScalarField
    w_riesz: ScalarField

    def total(self, anchor_weight=1.0) -> ScalarField:
        """L2 representative of the full derivative of the objective."""
        return self.l2_part.with_values(self.l2_part.values + anchor_weight * self.w_riesz.values)


@dataclass
class OptimalityReport:
    cone_violation: float
    interior_residual: float
    sign_flags: dict
    strong_stat_sign: float
    vi_residual: float = 0.0
    per_phi: list = field(default_factory=list)

    def to_dict(self):
        return {"cone_violation": self.cone_violation, "interior_residual": self.interior_residual,
                "sign_flags": dict(self.sign_flags), "strong_stat_sign": self.strong_stat_sign,
                "vi_residual": self.vi_residual, "per_phi": list(self.per_phi)}


def observation_mask(grid: Grid2D, obs: ObservationSet | None) -> np.ndarray:
    """Nodes where the tracking term acts; ``obs=None`` means the whole of D."""
    if obs is None:
        return np.ones(grid.shape, dtype=bool)
    return region_mask(grid, "E", obs)


def select_zeta(y: ScalarField, beta: NonsmoothFn, rule: str = "plus") -> ScalarField:
    if rule == "plus":
        z = beta.dplus(y.values)
    elif rule == "minus":
        z = beta.dminus(y.values)
    elif rule == "midpoint":
        z = 0.5 * (beta.dplus(y.values) + beta.dminus(y.values))
    else:
        raise ValueError(f"unknown zeta rule {rule!r}; choose from {ZETA_RULES}")
    return y.with_values(z)


def solve_linear_dirichlet(grid: Grid2D, coeff: np.ndarray, rhs: np.ndarray, unknown=None):
    """Solve ``-lap p + coeff*p = rhs`` with ``p = 0`` off the ``unknown`` nodes.

    Returns ``(p, residual)`` with ``p`` as a nodal array.
    """
    if unknown is None:
        unknown = grid.interior_mask()
    ids = unknown.ravel()
    A = neg_laplacian_dirichlet(grid, unknown)
    K = (A + sp.diags(coeff.ravel()[ids])).tocsc()
    b = rhs.ravel()[ids]
    x = splu(K).solve(b)
    res = float(np.max(np.abs(K @ x - b), initial=0.0))
    p = np.zeros(grid.size)
    p[ids] = x
    return p.reshape(grid.shape), res


def solve_adjoint(y: ScalarField, g: ScalarField, y_d: ScalarField, beta: NonsmoothFn, eps: float,
                  obs: ObservationSet | None = None, rule: str = "plus", mode: str = "penalized") -> AdjointSolution:
    """Adjoint of the penalized state equation (``mode="masked"``: limit equation on ``{g < 0}``)."""
    grid = y.grid
    zeta = select_zeta(y, beta, rule)
    chi = observation_mask(grid, obs)
    rhs = 2.0 * chi * (y.values - y_d.values)
    if mode == "penalized":
        coeff = zeta.values + heaviside_eval(eps, g.values) / eps
        unknown = grid.interior_mask()
    elif mode == "masked":
        coeff = zeta.values
        unknown = grid.interior_mask() & (g.values < 0)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    p, res = solve_linear_dirichlet(grid, coeff, rhs, unknown)
    return AdjointSolution(ScalarField(grid, p), zeta, rule, res)


class WMetric:
    """Discrete H2-type metric: L2(D) + L2, gradient and Laplacian terms away from E.

    ``(u, v)_W = u @ W @ v`` with ``W`` symmetric positive definite.
    """

    def __init__(self, grid: Grid2D, obs: ObservationSet | None = None):
        self.grid = grid
        self.obs = obs
        w = grid.weights().ravel()
        out = np.ones(grid.size, dtype=bool) if obs is None else ~obs.node_mask(grid, closed=True).ravel()
        self.mass = w
        self.outside = out
        n = grid.size
        idx = np.arange(n).reshape(grid.shape)
        terms = [sp.diags(w), sp.diags(w * out)]
        # edge differences along x and y, trapezoid weight in the transverse direction
        ty = np.full(grid.ny, grid.hy)
        ty[[0, -1]] *= 0.5
        tx = np.full(grid.nx, grid.hx)
        tx[[0, -1]] *= 0.5
        a = idx[:, :-1].ravel()
        b = idx[:, 1:].ravel()
        wt = (np.repeat(ty, grid.nx - 1) * grid.hx) * (out[a] & out[b])
        Gx = sp.csr_matrix((np.concatenate([-np.ones(a.size), np.ones(a.size)]) / grid.hx,
                            (np.tile(np.arange(a.size), 2), np.concatenate([a, b]))), shape=(a.size, n))
        terms.append(Gx.T @ sp.diags(wt) @ Gx)
        a = idx[:-1, :].ravel()
        b = idx[1:, :].ravel()
        wt = (np.tile(tx, grid.ny - 1) * grid.hy) * (out[a] & out[b])
        Gy = sp.csr_matrix((np.concatenate([-np.ones(a.size), np.ones(a.size)]) / grid.hy,
                            (np.tile(np.arange(a.size), 2), np.concatenate([a, b]))), shape=(a.size, n))
        terms.append(Gy.T @ sp.diags(wt) @ Gy)
        L = laplacian_matrix(grid)
        wl = w * out * grid.interior_mask().ravel()
        terms.append(L.T @ sp.diags(wl) @ L)
        self.W = sum(terms[1:], terms[0]).tocsc()
        self._lu = None

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.W @ np.asarray(u).ravel()

    def inner(self, u, v) -> float:
        u = u.values if isinstance(u, ScalarField) else np.asarray(u)
        v = v.values if isinstance(v, ScalarField) else np.asarray(v)
        return float(u.ravel() @ (self.W @ v.ravel()))

    def norm2(self, u) -> float:
        return self.inner(u, u)

    def riesz(self, u: np.ndarray) -> np.ndarray:
        """``w`` with ``(w, phi)_L2 = (u, phi)_W`` for every nodal ``phi``."""
        return (self.W @ np.asarray(u).ravel()) / self.mass

    def solve(self, b: np.ndarray) -> np.ndarray:
        """``W^{-1} b`` (``b`` a Euclidean dual vector)."""
        if self._lu is None:
            self._lu = splu(self.W)
        return self._lu.solve(np.asarray(b, dtype=float).ravel())


def assemble_gradient(p: ScalarField, y: ScalarField, g: ScalarField, g_sh: ScalarField | None,
                      eps: float, alpha: float, metric: WMetric) -> GradientData:
    """Gradient data of the penalized reduced objective at ``g``."""
    hp = heaviside_deriv(eps, g.values)
    l2 = p.values * (eps - hp * y.values / eps) - alpha * hp
    anchor = np.zeros(g.grid.shape) if g_sh is None else g.values - g_sh.values
    w = metric.riesz(anchor).reshape(g.grid.shape) if np.any(anchor) else np.zeros(g.grid.shape)
    return GradientData(g.with_values(l2), g.with_values(anchor), g.with_values(w))


def _bspline2(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = (t >= 0) & (t < 1)
    out[m] = 0.5 * t[m] ** 2
    m = (t >= 1) & (t < 2)
    out[m] = 0.5 * (-2.0 * t[m] ** 2 + 6.0 * t[m] - 3.0)
    m = (t >= 2) & (t < 3)
    out[m] = 0.5 * (3.0 - t[m]) ** 2
    return out


def bspline_basis(grid: Grid2D, obs: ObservationSet | None, per_axis: int = 8):
    """Tensor quadratic B-splines with support in D and away from the closure of E.

    Returns ``(phis, supports)``: nodal arrays and their support boxes.
    """
    X, Y = grid.coords()
    sx = (grid.x1 - grid.x0) / (per_axis + 2)
    sy = (grid.y1 - grid.y0) / (per_axis + 2)
    phis, boxes = [], []
    for a in range(per_axis):
        xa, xb = grid.x0 + a * sx, grid.x0 + (a + 3) * sx
        bx = _bspline2((X - xa) / sx)
        for b in range(per_axis):
            ya, yb = grid.y0 + b * sy, grid.y0 + (b + 3) * sy
            if obs is not None and _box_meets(obs, xa, xb, ya, yb):
                continue
            phis.append(bx * _bspline2((Y - ya) / sy))
            boxes.append((xa, xb, ya, yb))
    return phis, boxes


def _box_meets(obs: ObservationSet, xa, xb, ya, yb) -> bool:
    if obs.kind == "disk":
        cx, cy, r = obs.params
        px = min(max(cx, xa), xb)
        py = min(max(cy, ya), yb)
        return (px - cx) ** 2 + (py - cy) ** 2 <= r * r
    ea, eb, fa, fb = obs.bbox()
    return not (xb < ea or xa > eb or yb < fa or ya > fb)


def _flag(values, mask, sign, tol):
    if not np.any(mask):
        return NOT_APPLICABLE
    v = values[mask]
    ok = np.all(v >= -tol) if sign > 0 else np.all(v <= tol)
    return HOLDS if ok else FAILS


def sign_flags(y: ScalarField, p: ScalarField, g: ScalarField, y_d: ScalarField, obs: ObservationSet | None,
               case: str | None, rel_tol: float = 1e-8, y_ref: ScalarField | None = None):
    """Sign conditions under the ``f01`` (``>=``) or ``f00`` (``<=``) data assumption.

    ``y_ref`` replaces ``y_d`` in the state comparison (e.g. the regularized
    desired state).
    """
    if case not in ("f01", "f00"):
        return {"state_ge_yd": NOT_APPLICABLE, "state_sign": NOT_APPLICABLE, "adjoint_sign": NOT_APPLICABLE}
    sign = 1 if case == "f01" else -1
    chi = observation_mask(y.grid, obs)
    inside = g.values < 0
    ref = y_d if y_ref is None else y_ref
    diff = y.values - ref.values
    tol_y = rel_tol * max(y.max_abs(), ref.max_abs(), 1e-300)
    tol_p = rel_tol * max(p.max_abs(), 1e-300)
    return {
        "state_ge_yd": _flag(diff, chi if y_ref is None else np.ones_like(chi), sign, tol_y),
        "state_sign": _flag(y.values, inside & ~chi, sign, tol_y),
        "adjoint_sign": _flag(p.values, inside, sign, tol_p),
    }


def feasible_mask(grid: Grid2D, obs: ObservationSet | None) -> np.ndarray:
    """Nodes where the control must be nonpositive (closed E)."""
    if obs is None:
        return np.zeros(grid.shape, dtype=bool)
    return obs.node_mask(grid, closed=True)


def vi_residual(g: ScalarField, grad_l2: np.ndarray, obs: ObservationSet | None) -> float:
    """Max-norm of ``g - P_F(g - G)`` for the L2 gradient representative ``G``."""
    emask = feasible_mask(g.grid, obs)
    trial = g.values - grad_l2
    proj = np.where(emask, np.minimum(trial, 0.0), trial)
    return float(np.max(np.abs(g.values - proj)))


def check_optimality(y: ScalarField, p: ScalarField, g: ScalarField, g_sh: ScalarField | None, eps: float,
                     alpha: float, obs: ObservationSet | None, basis=None, metric: WMetric | None = None,
                     beta: NonsmoothFn | None = None, y_d: ScalarField | None = None, case: str | None = None,
                     anchor_weight: float = 1.0, rel_tol: float = 1e-8, node_tol: float = 1e-10) -> OptimalityReport:
    grid = g.grid
    metric = metric or WMetric(grid, obs)
    if basis is None:
        basis, _ = bspline_basis(grid, obs)
    gd = assemble_gradient(p, y, g, g_sh, eps, alpha, metric)
    G = gd.total(anchor_weight if g_sh is not None else 0.0).values
    emask = feasible_mask(grid, obs)
    cone = float(max(0.0, np.max(G[emask], initial=0.0)))
    dual = metric.mass * gd.l2_part.flat
    if g_sh is not None:
        dual = dual + anchor_weight * metric.apply(gd.anchor.values)
    per_phi = [float(phi.ravel() @ dual) for phi in basis]
    interior = float(max((abs(v) for v in per_phi), default=0.0))
    flags = sign_flags(y, p, g, y_d if y_d is not None else y.with_values(np.zeros(grid.shape)), obs, case, rel_tol)
    strong = 0.0
    if beta is not None and beta.nonsmooth_points:
        near = np.zeros(grid.shape, dtype=bool)
        for z in beta.nonsmooth_points:
            near |= np.abs(y.values - z) <= node_tol
        near &= grid.interior_mask()
        if np.any(near):
            strong = float(np.max(p.values[near]))
            flags["strong_stationarity"] = HOLDS if strong <= rel_tol * max(p.max_abs(), 1e-300) else FAILS
        else:
            flags["strong_stationarity"] = NOT_APPLICABLE
    return OptimalityReport(cone, interior, flags, strong, vi_residual(g, G, obs), per_phi)


def base_forcing(y_d: ScalarField, beta: NonsmoothFn, obs: ObservationSet | None) -> ScalarField:
    """``chi_E(-lap y_d + beta(y_d)) + chi_{D\\E} beta(0)`` with ``y_d`` extended by zero."""
    chi = observation_mask(y_d.grid, obs)
    yd = np.where(chi, y_d.values, 0.0)
    inner = -laplacian(y_d.with_values(yd)).values + beta.eval(yd)
    return y_d.with_values(np.where(chi, inner, beta.eval(0.0)))


def desired_state_comparison(y_d: ScalarField, f: ScalarField, beta: NonsmoothFn, g: ScalarField, eps: float,
                             obs: ObservationSet | None, include_eg: bool = True, rel_tol: float = 1e-8):
    """Regularized desired state and its comparison with the penalized state."""
    grid = g.grid
    base = base_forcing(y_d, beta, obs)
    yde = solve_state(StateProblem(grid, base, g, beta, eps=eps, include_eg=include_eg)).y
    y = solve_state(StateProblem(grid, f, g, beta, eps=eps, include_eg=include_eg)).y
    interior = grid.interior_mask()
    df = (f.values - base.values)[interior]
    diff = y.values - yde.values
    tol = rel_tol * max(y.max_abs(), yde.max_abs(), 1e-300)
    flags = {
        "f01": bool(np.all(df >= 0)),
        "f00": bool(np.all(df <= 0)),
        "state_ge_ydeps": bool(np.all(diff >= -tol)),
        "state_le_ydeps": bool(np.all(diff <= tol)),
    }
    return {"ydeps": yde, "y": y, "flags": flags, "max_diff": float(np.max(np.abs(diff)))}


def conjecture_diagnostic(y: ScalarField, p: ScalarField, g: ScalarField, eps: float, phi,
                          obs: ObservationSet | None = None, **trace_kw):
    """Compare ``-(1/eps)(H_eps'(g) p y, phi)`` with the boundary term ``-int grad y . grad p phi/|grad g|``.

    Reported only; no ground truth exists for the gap.
    """
    from .curves import curvilinear_integral, trace_level

    grid = g.grid
    X, Y = grid.coords()
    phi_nodes = np.asarray(phi(X, Y), dtype=float) * np.ones(grid.shape)
    out = np.ones(grid.shape, dtype=bool) if obs is None else ~region_mask(grid, "E", obs)
    w = grid.weights()
    lhs = -float(np.sum(w * out * heaviside_deriv(eps, g.values) * p.values * y.values * phi_nodes)) / eps
    if not np.any(p.values) or not np.any(y.values):
        return {"lhs": lhs, "rhs": 0.0, "gap": abs(lhs), "components": 0}
    yi, pi = y.interpolant(), p.interpolant()
    curves = trace_level(g, 0.0, obs=obs, **trace_kw)

    def integrand(xs, ys):
        _, yx, yy = yi.evaluate(xs, ys)
        _, px, py = pi.evaluate(xs, ys)
        return (yx * px + yy * py) * phi(xs, ys)

    rhs = -sum(curvilinear_integral(c, integrand, "inv_grad") for c in curves)
    return {"lhs": lhs, "rhs": float(rhs), "gap": abs(lhs - rhs), "components": len(curves)}
