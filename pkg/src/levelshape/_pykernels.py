"""Pure-Python reference kernels; same signatures as the compiled ``_ckernels``."""
import math

import numpy as np

CLOSED, LEFT_GRID, MAX_STEPS, ZERO_GRADIENT = 0, 1, 2, 3


def eval_bicubic(coef, x0, y0, hx, hy, xs, ys):
    nyc, nxc = coef.shape[:2]
    s = (np.asarray(xs, dtype=float) - x0) / hx
    r = (np.asarray(ys, dtype=float) - y0) / hy
    j = np.clip(np.floor(s).astype(np.intp), 0, nxc - 1)
    i = np.clip(np.floor(r).astype(np.intp), 0, nyc - 1)
    u = s - j
    v = r - i
    c = coef[i, j]
    one = np.ones_like(u)
    zero = np.zeros_like(u)
    U = np.stack([one, u, u * u, u * u * u], axis=-1)
    V = np.stack([one, v, v * v, v * v * v], axis=-1)
    dU = np.stack([zero, one, 2 * u, 3 * u * u], axis=-1)
    dV = np.stack([zero, one, 2 * v, 3 * v * v], axis=-1)
    val = np.einsum("na,nab,nb->n", U, c, V)
    gx = np.einsum("na,nab,nb->n", dU, c, V) / hx
    gy = np.einsum("na,nab,nb->n", U, c, dV) / hy
    return val, gx, gy


def _grad(coef, nxc, nyc, x0, y0, hx, hy, x, y):
    s = (x - x0) / hx
    r = (y - y0) / hy
    j = min(max(int(math.floor(s)), 0), nxc - 1)
    i = min(max(int(math.floor(r)), 0), nyc - 1)
    u = s - j
    v = r - i
    c = coef[i, j].tolist()
    gx = gy = 0.0
    upow = (1.0, u, u * u, u * u * u)
    dupow = (0.0, 1.0, 2.0 * u, 3.0 * u * u)
    for a in range(4):
        ca = c[a]
        row_v = ca[0] + v * (ca[1] + v * (ca[2] + v * ca[3]))
        row_dv = ca[1] + v * (2.0 * ca[2] + 3.0 * v * ca[3])
        gx += dupow[a] * row_v
        gy += upow[a] * row_dv
    return gx / hx, gy / hy


def _inside(nxc, nyc, x0, y0, hx, hy, x, y):
    return x0 <= x <= x0 + nxc * hx and y0 <= y <= y0 + nyc * hy


def _rk4(coef, nxc, nyc, x0, y0, hx, hy, x, y, dt):
    gx, gy = _grad(coef, nxc, nyc, x0, y0, hx, hy, x, y)
    k1x, k1y = -gy, gx
    gx, gy = _grad(coef, nxc, nyc, x0, y0, hx, hy, x + 0.5 * dt * k1x, y + 0.5 * dt * k1y)
    k2x, k2y = -gy, gx
    gx, gy = _grad(coef, nxc, nyc, x0, y0, hx, hy, x + 0.5 * dt * k2x, y + 0.5 * dt * k2y)
    k3x, k3y = -gy, gx
    gx, gy = _grad(coef, nxc, nyc, x0, y0, hx, hy, x + dt * k3x, y + dt * k3y)
    k4x, k4y = -gy, gx
    return (x + dt * (k1x + 2 * k2x + 2 * k3x + k4x) / 6.0,
            y + dt * (k1y + 2 * k2y + 2 * k3y + k4y) / 6.0)


def rk4_step(coef, x0, y0, hx, hy, x, y, dt):
    nyc, nxc = coef.shape[:2]
    return _rk4(coef, nxc, nyc, x0, y0, hx, hy, float(x), float(y), float(dt))


def trace_closed(coef, x0, y0, hx, hy, sx, sy, step_len, dt_max, max_steps, close_tol):
    """Adaptive RK4 along the Hamiltonian field until first return near the seed.

    Returns ``(status, ts, xs, ys)`` with the visited points, seed included.
    """
    nyc, nxc = coef.shape[:2]
    ts = [0.0]
    xs = [float(sx)]
    ys = [float(sy)]
    x, y = float(sx), float(sy)
    gx, gy = _grad(coef, nxc, nyc, x0, y0, hx, hy, x, y)
    speed = math.hypot(gx, gy)
    if speed < 1e-14:
        return ZERO_GRADIENT, np.array(ts), np.array(xs), np.array(ys)
    v0x, v0y = -gy, gx
    t = 0.0
    left_ball = False
    status = MAX_STEPS
    for _ in range(int(max_steps)):
        dt = min(step_len / speed, dt_max)
        x, y = _rk4(coef, nxc, nyc, x0, y0, hx, hy, x, y, dt)
        t += dt
        ts.append(t)
        xs.append(x)
        ys.append(y)
        if not _inside(nxc, nyc, x0, y0, hx, hy, x, y):
            status = LEFT_GRID
            break
        gx, gy = _grad(coef, nxc, nyc, x0, y0, hx, hy, x, y)
        speed = math.hypot(gx, gy)
        if speed < 1e-14:
            status = ZERO_GRADIENT
            break
        d = math.hypot(x - sx, y - sy)
        if d > close_tol:
            left_ball = True
        elif left_ball and (-gy * v0x + gx * v0y) > 0.0:
            status = CLOSED
            break
    return status, np.array(ts), np.array(xs), np.array(ys)


def rk4_fixed(coef, x0, y0, hx, hy, sx, sy, dt, nsteps):
    """Fixed-step RK4; returns ``(status, xs, ys)`` with ``nsteps + 1`` points."""
    nyc, nxc = coef.shape[:2]
    n = int(nsteps)
    xs = np.empty(n + 1)
    ys = np.empty(n + 1)
    x, y = float(sx), float(sy)
    xs[0], ys[0] = x, y
    for k in range(n):
        x, y = _rk4(coef, nxc, nyc, x0, y0, hx, hy, x, y, dt)
        if not _inside(nxc, nyc, x0, y0, hx, hy, x, y):
            return LEFT_GRID, xs[: k + 2], ys[: k + 2]
        xs[k + 1], ys[k + 1] = x, y
    return CLOSED, xs, ys


def polyline_distance(px, py, qx, qy):
    """Distance from each point ``p`` to the closed polyline through ``q``.

    Returns ``(dist, seg, t)``: the nearest segment ``q[seg] -> q[seg+1]`` and
    the foot parameter ``t`` in [0, 1] on it.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    ax = np.asarray(qx, dtype=float)
    ay = np.asarray(qy, dtype=float)
    bx = np.roll(ax, -1)
    by = np.roll(ay, -1)
    ex = bx - ax
    ey = by - ay
    ll = ex * ex + ey * ey
    ll = np.where(ll > 0, ll, 1.0)
    out = np.empty(px.size)
    seg = np.empty(px.size, dtype=np.intp)
    tpar = np.empty(px.size)
    chunk = max(1, 2_000_000 // max(ax.size, 1))
    for s in range(0, px.size, chunk):
        qxs = px[s:s + chunk, None]
        qys = py[s:s + chunk, None]
        t = np.clip(((qxs - ax) * ex + (qys - ay) * ey) / ll, 0.0, 1.0)
        dx = qxs - (ax + t * ex)
        dy = qys - (ay + t * ey)
        d2 = dx * dx + dy * dy
        k = np.argmin(d2, axis=1)
        rows = np.arange(k.size)
        out[s:s + chunk] = np.sqrt(d2[rows, k])
        seg[s:s + chunk] = k
        tpar[s:s + chunk] = t[rows, k]
    return out, seg, tpar
