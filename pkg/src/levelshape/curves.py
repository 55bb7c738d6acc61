"""Level curves of shape functions traced as closed Hamiltonian orbits.

A level ``{g = c}`` is followed by integrating ``x' = (-dg/dx2, dg/dx1)`` on the
bicubic interpolant of ``g``. Integrals ``int h/|grad g| dxi`` along the curve
become plain time integrals over one period.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components

from . import kernels
from .grid import Interpolant, ObservationSet, ScalarField, region_mask
from .nonsmooth import heaviside_deriv, psi_eval


class TraceError(RuntimeError):
    kind = "trace"


class DriftError(TraceError):
    kind = "drift"


class GeometryError(TraceError):
    kind = "geometry"


class ClosureError(TraceError):
    kind = "non-closure"


class PreconditionError(ValueError):
    pass


@dataclass
class LevelCurve:
    level: float
    seed: tuple
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    period: float
    length: float
    component_id: int = 0
    grad_norm: np.ndarray = field(default=None, repr=False)
    drift: float = 0.0
    closure_error: float = 0.0
    field: Interpolant = field(default=None, repr=False, compare=False)

    @property
    def samples(self):
        return np.column_stack([self.t, self.x, self.y])

    @property
    def n(self):
        return self.t.size

    def polygon_length(self) -> float:
        return float(np.sum(np.hypot(np.diff(self.x, append=self.x[0]), np.diff(self.y, append=self.y[0]))))

    def sidecar(self):
        return {"level": self.level, "period": self.period, "length": self.length,
                "component_id": self.component_id, "seed": [float(self.seed[0]), float(self.seed[1])]}


@dataclass
class CurveFamily:
    level: float
    curves: list

    def __iter__(self):
        return iter(self.curves)

    def __len__(self):
        return len(self.curves)

    def __getitem__(self, k):
        return self.curves[k]

    @property
    def periods(self):
        return [c.period for c in self.curves]

    def min_pairwise_distance(self) -> float:
        best = math.inf
        for a in range(len(self.curves)):
            for b in range(a + 1, len(self.curves)):
                A, B = self.curves[a], self.curves[b]
                d, _, _ = kernels.polyline_distance(A.x, A.y, B.x, B.y)
                best = min(best, float(d.min()))
        return best


@dataclass
class AdmissibilityCertificate:
    delta: float
    boundary_min: float
    e_max: float
    sign_structure_ok: bool
    grad_max: float = 0.0

    @property
    def admissible(self) -> bool:
        return self.delta > 0 and self.boundary_min > 0 and self.e_max <= 0 and self.sign_structure_ok

    @property
    def strict(self) -> bool:
        return self.admissible and self.e_max < 0

    def to_dict(self):
        return {"delta": self.delta, "boundary_min": self.boundary_min, "e_max": self.e_max,
                "sign_structure_ok": self.sign_structure_ok, "grad_max": self.grad_max,
                "admissible": self.admissible, "strict": self.strict}


def as_interpolant(g) -> Interpolant:
    if isinstance(g, Interpolant):
        return g
    if isinstance(g, ScalarField):
        return g.interpolant()
    raise TypeError("expected a ScalarField or Interpolant")


def _fine_axes(grid, sub):
    sub = max(1, min(int(sub), int(math.sqrt(4e6 / grid.size))))
    xs = np.linspace(grid.x0, grid.x1, (grid.nx - 1) * sub + 1)
    ys = np.linspace(grid.y0, grid.y1, (grid.ny - 1) * sub + 1)
    return xs, ys


def check_admissibility(g: ScalarField, obs: ObservationSet | None = None, sub: int = 4) -> AdmissibilityCertificate:
    """Sampled certificate of admissibility for a shape function."""
    grid = g.grid
    ip = as_interpolant(g)
    xs, ys = _fine_axes(grid, sub)
    X, Y = np.meshgrid(xs, ys)
    val, gx, gy = ip.evaluate(X, Y)
    gn = np.hypot(gx, gy)
    inE = np.zeros(X.shape, dtype=bool) if obs is None else obs.contains(X, Y, closed=True)
    out = ~inE
    delta = float(np.min((gn + np.abs(val))[out])) if out.any() else 0.0
    edge = np.concatenate([val[0], val[-1], val[:, 0], val[:, -1]])
    boundary_min = float(edge.min())
    e_max = -math.inf
    if obs is not None:
        if inE.any():
            e_max = float(val[inE].max())
        th = np.linspace(0.0, 2.0 * np.pi, 720, endpoint=False)
        if obs.kind == "disk":
            cx, cy, r = obs.params
            bx, by = cx + r * np.cos(th), cy + r * np.sin(th)
        else:
            a, b, c, d = obs.bbox()
            s = np.linspace(0.0, 1.0, 181)
            bx = np.concatenate([a + (b - a) * s, b + 0 * s, b - (b - a) * s, a + 0 * s])
            by = np.concatenate([c + 0 * s, c + (d - c) * s, d + 0 * s, d - (d - c) * s])
        e_max = max(e_max, float(ip(bx, by).max()))
    # every node with g <= 0 must touch the open set {g < 0}
    v = g.values
    neg = v < 0
    pad = np.pad(neg, 1)
    near = np.zeros_like(neg)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            near |= pad[1 + di:1 + di + v.shape[0], 1 + dj:1 + dj + v.shape[1]]
    sign_ok = bool(np.all(neg | (v > 0) | near))
    return AdmissibilityCertificate(delta, boundary_min, e_max if obs is not None else -math.inf, sign_ok,
                                    float(gn.max()))


def find_seeds(g, c: float = 0.0, obs: ObservationSet | None = None):
    """One point on each component of ``{g = c}`` in ``D`` minus the closure of ``E``."""
    ip = as_interpolant(g)
    grid = ip.grid
    d = ip.source.values - c
    pos = d > 0
    ny, nx = d.shape
    blocked = np.zeros(d.shape, dtype=bool) if obs is None else obs.node_mask(grid, closed=True)
    hcross = (pos[:, :-1] != pos[:, 1:]) & ~blocked[:, :-1] & ~blocked[:, 1:]
    vcross = (pos[:-1, :] != pos[1:, :]) & ~blocked[:-1, :] & ~blocked[1:, :]
    nh = ny * (nx - 1)
    hid = np.arange(nh).reshape(ny, nx - 1)
    vid = nh + np.arange((ny - 1) * nx).reshape(ny - 1, nx)
    cross = np.concatenate([hcross.ravel(), vcross.ravel()])
    if not cross.any():
        return []
    # cell edges: bottom, top, left, right
    cell_edges = np.stack([hid[:-1, :], hid[1:, :], vid[:, :-1], vid[:, 1:]], axis=-1).reshape(-1, 4)
    flags = cross[cell_edges]
    count = flags.sum(axis=1)
    rows, cols = [], []
    for k in np.nonzero((count >= 2) & (count < 4))[0]:
        e = cell_edges[k][flags[k]]
        rows.extend(e[:-1])
        cols.extend(e[1:])
    n = cross.size
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    idx = np.nonzero(cross)[0]
    jump = np.empty(idx.size)
    ends = []
    for m, e in enumerate(idx):
        if e < nh:
            i, j = divmod(int(e), nx - 1)
            a, b = (i, j), (i, j + 1)
        else:
            i, j = divmod(int(e - nh), nx)
            a, b = (i, j), (i + 1, j)
        jump[m] = abs(d[a] - d[b])
        ends.append((a, b))
    seeds = []
    seen = {}
    for m in np.lexsort((idx, -jump)):
        lab = labels[idx[m]]
        if lab in seen:
            continue
        seen[lab] = idx[m]
    for lab in sorted(seen, key=lambda k: seen[k]):
        m = int(np.searchsorted(idx, seen[lab]))
        (ia, ja), (ib, jb) = ends[m]
        xa, ya = grid.node(ia, ja)
        xb, yb = grid.node(ib, jb)
        if d[ia, ja] == 0.0:
            seeds.append((float(xa), float(ya)))
            continue

        def along(s):
            return float(ip(xa + s * (xb - xa), ya + s * (yb - ya))) - c

        s = brentq(along, 0.0, 1.0, xtol=1e-15, rtol=1e-15, maxiter=200)
        seeds.append((float(xa + s * (xb - xa)), float(ya + s * (yb - ya))))
    return seeds


def _field_at(ip, x, y):
    _, gx, gy = ip.evaluate(x, y)
    return -float(gy), float(gx)


def trace_curve(g, seed, c: float = 0.0, obs: ObservationSet | None = None, step_fraction: float = 0.1,
                n_samples: int | None = None, trace_tol: float | None = None, close_fraction: float = 0.25,
                closure_tol: float | None = None, max_steps: int = 1_000_000, component_id: int = 0) -> LevelCurve:
    """Trace the closed level curve through ``seed``.

    The step is ``step_fraction * h`` in arc length. The closing time is
    refined by Newton on the seed's normal line; samples are then produced at
    uniform time steps over one period.
    """
    ip = as_interpolant(g)
    grid = ip.grid
    sx, sy = float(seed[0]), float(seed[1])
    if not grid.contains(sx, sy, strict=True):
        raise PreconditionError(f"seed ({sx:g}, {sy:g}) is not inside D")
    if obs is not None and obs.contains(sx, sy, closed=True):
        raise PreconditionError(f"seed ({sx:g}, {sy:g}) lies in the closure of E")
    scale = max(ip.source.max_abs(), 1e-300)
    width = min(grid.x1 - grid.x0, grid.y1 - grid.y0)
    v0x, v0y = _field_at(ip, sx, sy)
    if math.hypot(v0x, v0y) <= 1e-10 * scale / width:
        raise PreconditionError(f"grad g vanishes at seed ({sx:g}, {sy:g})")
    h = min(grid.hx, grid.hy)
    coef, x0, y0, hx, hy = ip.coef, grid.x0, grid.y0, grid.hx, grid.hy
    status, ts, xs, ys = kernels.trace_closed(coef, x0, y0, hx, hy, sx, sy, step_fraction * h, math.inf,
                                              int(max_steps), close_fraction * h)
    if status == kernels.LEFT_GRID:
        raise GeometryError(f"trajectory from ({sx:g}, {sy:g}) left D at t={ts[-1]:.6g}")
    if status == kernels.ZERO_GRADIENT:
        raise GeometryError(f"trajectory from ({sx:g}, {sy:g}) reached a critical point")
    if status == kernels.MAX_STEPS:
        raise ClosureError(f"no closure within {max_steps} steps (t={ts[-1]:.6g})")

    def phi(px, py):
        return (px - sx) * v0x + (py - sy) * v0y

    k = ts.size - 1
    if phi(xs[k], ys[k]) >= 0:
        while k > 1 and phi(xs[k - 1], ys[k - 1]) >= 0:
            k -= 1
        k -= 1
        tk, xk, yk, dtk = ts[k], xs[k], ys[k], ts[k + 1] - ts[k]
    else:
        dtk = ts[k] - ts[k - 1]
        tk, xk, yk = ts[k], xs[k], ys[k]
        for _ in range(64):
            xn, yn = kernels.rk4_step(coef, x0, y0, hx, hy, xk, yk, dtk)
            if phi(xn, yn) >= 0:
                break
            tk, xk, yk = tk + dtk, xn, yn
        else:
            raise ClosureError("closure crossing not found")
    # Newton for the crossing time, safeguarded to one step
    tau = 0.0
    fx, fy = _field_at(ip, xk, yk)
    den = fx * v0x + fy * v0y
    tau = min(max(-phi(xk, yk) / den, 0.0), dtk) if den > 0 else 0.5 * dtk
    for _ in range(20):
        xt, yt = kernels.rk4_step(coef, x0, y0, hx, hy, xk, yk, tau)
        fx, fy = _field_at(ip, xt, yt)
        den = fx * v0x + fy * v0y
        if den <= 0:
            break
        step = phi(xt, yt) / den
        tau = min(max(tau - step, 0.0), 2.0 * dtk)
        if abs(step) <= 1e-16 * max(tk, 1.0):
            break
    period = float(tk + tau)
    n = int(n_samples) if n_samples else max(256, ts.size)
    dt = period / n
    status, rx, ry = kernels.rk4_fixed(coef, x0, y0, hx, hy, sx, sy, dt, n)
    if status == kernels.LEFT_GRID:
        raise GeometryError("resampled trajectory left D")
    closure = math.hypot(rx[-1] - sx, ry[-1] - sy)
    ctol = closure_tol if closure_tol is not None else 1e-4 * h
    if closure > ctol:
        raise ClosureError(f"curve does not close: |x(T) - x(0)| = {closure:.3e} > {ctol:.3e}")
    rx, ry = rx[:n], ry[:n]
    val, gx, gy = ip.evaluate(rx, ry)
    drift = float(np.max(np.abs(val - c)))
    tol = trace_tol if trace_tol is not None else 1e-6 * scale
    if drift > tol:
        raise DriftError(f"level drift {drift:.3e} exceeds {tol:.3e}")
    if not np.all(grid.contains(rx, ry, strict=True)):
        raise GeometryError("curve touches the boundary of D")
    if obs is not None and np.any(obs.contains(rx, ry, closed=True)):
        raise GeometryError("curve enters the closure of E")
    gn = np.hypot(gx, gy)
    t = dt * np.arange(n)
    return LevelCurve(float(c), (sx, sy), t, rx, ry, period, float(dt * gn.sum()), component_id, gn, drift,
                      closure, ip)


def trace_level(g, c: float = 0.0, obs: ObservationSet | None = None, **kw) -> CurveFamily:
    """All components of ``{g = c}`` outside the closure of ``E``."""
    ip = as_interpolant(g)
    curves = []
    h = min(ip.grid.hx, ip.grid.hy)
    for s in find_seeds(ip, c, obs):
        if any(kernels.polyline_distance(np.array([s[0]]), np.array([s[1]]), cv.x, cv.y)[0][0] < 0.5 * h
               for cv in curves):
            continue
        curves.append(trace_curve(ip, s, c, obs, component_id=len(curves), **kw))
    return CurveFamily(float(c), curves)


def curvilinear_integral(curve: LevelCurve, h, weight: str = "inv_grad") -> float:
    """``int h/|grad g| dxi`` (``inv_grad``) or ``int h dxi`` (``arc``) over a closed curve.

    Periodic trapezoid rule over the uniform time samples.
    """
    vals = np.asarray(h(curve.x, curve.y), dtype=float) * np.ones(curve.n) if callable(h) else np.full(curve.n, float(h))
    if weight == "arc":
        vals = vals * curve.grad_norm
    elif weight != "inv_grad":
        raise ValueError(f"unknown weight {weight!r}")
    return float(curve.period / curve.n * vals.sum())


def _project_to_level(ip: Interpolant, x, y, c, iters=30):
    for _ in range(iters):
        v, gx, gy = ip.evaluate(x, y)
        g2 = gx * gx + gy * gy
        dx = (v - c) * gx / g2
        dy = (v - c) * gy / g2
        x, y = x - dx, y - dy
        if np.max(np.abs(v - c)) <= 1e-14 * max(1.0, ip.source.max_abs()):
            break
    return x, y


def _directed(A_list, B_list, refine=True):
    """Max over samples of A of the distance to the union of curves in B."""
    worst = 0.0
    for A in A_list:
        best = np.full(A.n, np.inf)
        for B in B_list:
            d, seg, t = kernels.polyline_distance(A.x, A.y, B.x, B.y)
            if refine and B.field is not None:
                nxt = (seg + 1) % B.n
                fx = B.x[seg] + t * (B.x[nxt] - B.x[seg])
                fy = B.y[seg] + t * (B.y[nxt] - B.y[seg])
                fx, fy = _project_to_level(B.field, fx, fy, B.level, iters=3)
                d = np.hypot(A.x - fx, A.y - fy)
            best = np.minimum(best, d)
        worst = max(worst, float(best.max()))
    return worst


def hausdorff_distance(A, B, refine: bool = True) -> float:
    """Hausdorff-Pompeiu distance between curves or curve families."""
    A_list = [A] if isinstance(A, LevelCurve) else list(A)
    B_list = [B] if isinstance(B, LevelCurve) else list(B)
    if not A_list or not B_list:
        return 0.0 if not A_list and not B_list else math.inf
    return max(_directed(A_list, B_list, refine), _directed(B_list, A_list, refine))


def _nodal(phi, grid):
    X, Y = grid.coords()
    if isinstance(phi, ScalarField):
        return phi.values
    if callable(phi):
        return np.asarray(phi(X, Y), dtype=float) * np.ones(grid.shape)
    return np.full(grid.shape, float(phi))


def _curve_phi(phi):
    if isinstance(phi, ScalarField):
        ip = phi.interpolant()
        return lambda x, y: ip(x, y)
    if callable(phi):
        return phi
    return lambda x, y, v=float(phi): np.full(np.shape(x), v)


def band_integral(g: ScalarField, eps: float, phi, obs: ObservationSet | None = None) -> float:
    """Trapezoid quadrature of ``H_eps'(g) phi`` over ``D`` minus ``E``."""
    grid = g.grid
    out = np.ones(grid.shape, dtype=bool) if obs is None else region_mask(grid, "D\\E", obs)
    return float(np.sum(grid.weights() * out * heaviside_deriv(eps, g.values) * _nodal(phi, grid)))


def level_integral(g, c: float, phi, obs: ObservationSet | None = None, **kw) -> float:
    """``sum over components of int_{g=c} phi/|grad g| dxi``."""
    fam = trace_level(g, c, obs, **kw)
    f = _curve_phi(phi)
    return float(sum(curvilinear_integral(cv, f, "inv_grad") for cv in fam))


def coarea_check(g: ScalarField, eps: float, phi, obs: ObservationSet | None = None, n_gauss: int = 16, **kw):
    """Area form versus level-curve form of ``int H_eps'(g) phi``."""
    area = band_integral(g, eps, phi, obs)
    nodes, weights = np.polynomial.legendre.leggauss(n_gauss)
    z = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    eta = np.array([level_integral(g, eps * zk, phi, obs, **kw) for zk in z])
    curve = float(np.sum(w * psi_eval(z) * eta))
    return {"eps": float(eps), "area_side": area, "curve_side": curve, "gap": abs(area - curve)}


def dirac_limit_check(g_seq, g_limit: ScalarField, phi, eps_list, obs: ObservationSet | None = None, **kw):
    """``(H_eps'(g_eps), phi)`` against the curvilinear limit ``int phi/|grad g| dxi`` on ``{g_limit = 0}``."""
    target = level_integral(g_limit, 0.0, phi, obs, **kw)
    rows = []
    for eps in eps_list:
        lhs = band_integral(g_seq(eps), eps, phi, obs)
        rows.append({"eps": float(eps), "lhs": lhs, "target": target, "error": abs(lhs - target)})
    errs = [r["error"] for r in rows]
    return {"rows": rows, "target": target,
            "nonincreasing": bool(all(b <= a for a, b in zip(errs, errs[1:])))}


def tube_radius(g_limit: ScalarField, family: CurveFamily, obs: ObservationSet | None = None,
                cert: AdmissibilityCertificate | None = None) -> float:
    """``min(delta/(2L), dist(curves, bdry D), dist(curves, bdry E))``."""
    cert = cert or check_admissibility(g_limit, obs)
    grid = g_limit.grid
    lam = cert.delta / (2.0 * cert.grad_max) if cert.grad_max > 0 else math.inf
    for cv in family:
        lam = min(lam, float(np.min(grid.dist_to_boundary(cv.x, cv.y))))
        if obs is not None:
            lam = min(lam, float(np.min(obs.signed_distance(cv.x, cv.y))))
    return lam


def _strictly_decreasing(v):
    return bool(all(b < a for a, b in zip(v, v[1:])))


def convergence_suite(g_seq, g_limit: ScalarField, eps_list, z: float = 0.5,
                      obs: ObservationSet | None = None, **kw):
    """Tubes, component counts, Hausdorff distances, periods and matched trajectories along an eps-family."""
    limit = trace_level(g_limit, 0.0, obs, **kw)
    if not len(limit):
        raise TraceError("the limit level set {g = 0} is empty")
    lam = tube_radius(g_limit, limit, obs)
    rows = []
    for eps in sorted(eps_list, reverse=True):
        ge = as_interpolant(g_seq(eps))
        c = eps * z
        fam = trace_level(ge, c, obs, **kw)
        tube = _directed(list(fam), list(limit)) if len(fam) else math.inf
        period_err = 0.0
        traj_err = 0.0
        for cv in limit:
            sx, sy = _project_to_level(ge, np.array([cv.seed[0]]), np.array([cv.seed[1]]), c)
            matched = trace_curve(ge, (float(sx[0]), float(sy[0])), c, obs, **kw)
            period_err = max(period_err, abs(matched.period - cv.period))
            _, mx, my = kernels.rk4_fixed(ge.coef, ge.grid.x0, ge.grid.y0, ge.grid.hx, ge.grid.hy,
                                          float(sx[0]), float(sy[0]), cv.period / cv.n, cv.n)
            traj_err = max(traj_err, float(np.max(np.hypot(mx[:cv.n] - cv.x, my[:cv.n] - cv.y))))
        rows.append({"eps": float(eps), "level": c, "components": len(fam), "count_match": len(fam) == len(limit),
                     "tube_distance": tube, "tube_ok": tube <= lam, "hausdorff": hausdorff_distance(fam, limit),
                     "period_error": period_err, "trajectory_error": traj_err})
    return {
        "lambda": lam,
        "limit_periods": limit.periods,
        "rows": rows,
        "tube_ok": all(r["tube_ok"] for r in rows),
        "counts_match": all(r["count_match"] for r in rows),
        "hausdorff_decreasing": _strictly_decreasing([r["hausdorff"] for r in rows]),
        "period_decreasing": _strictly_decreasing([r["period_error"] for r in rows]),
        "trajectory_decreasing": _strictly_decreasing([r["trajectory_error"] for r in rows]),
    }


def write_curve(path, curve: LevelCurve):
    """CSV ``t,x1,x2`` plus a JSON sidecar next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("t,x1,x2\n")
        for t, x, y in zip(curve.t, curve.x, curve.y):
            fh.write(f"{t:.17g},{x:.17g},{y:.17g}\n")
    side = path.with_suffix(".json")
    side.write_text(json.dumps(curve.sidecar(), indent=2, sort_keys=True) + "\n")
    return path, side


def read_curve(path):
    """Return ``(samples, sidecar)``; samples has columns ``t, x1, x2``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"curve file not found: {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    return data, meta
