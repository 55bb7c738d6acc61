# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: bicubic evaluation, Hamiltonian RK4 tracing, polyline distances.

Signatures and return conventions match ``levelshape._pykernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, hypot

cnp.import_array()

DEF CLOSED = 0
DEF LEFT_GRID = 1
DEF MAX_STEPS = 2
DEF ZERO_GRADIENT = 3


cdef struct Patch:
    const double* coef
    Py_ssize_t nxc
    Py_ssize_t nyc
    double x0
    double y0
    double hx
    double hy


cdef inline void _locate(const Patch* p, double x, double y,
                         Py_ssize_t* i, Py_ssize_t* j, double* u, double* v) noexcept nogil:
    cdef double s = (x - p.x0) / p.hx
    cdef double r = (y - p.y0) / p.hy
    cdef Py_ssize_t jj = <Py_ssize_t>floor(s)
    cdef Py_ssize_t ii = <Py_ssize_t>floor(r)
    if jj < 0:
        jj = 0
    elif jj > p.nxc - 1:
        jj = p.nxc - 1
    if ii < 0:
        ii = 0
    elif ii > p.nyc - 1:
        ii = p.nyc - 1
    i[0] = ii
    j[0] = jj
    u[0] = s - jj
    v[0] = r - ii


cdef inline void _eval(const Patch* p, double x, double y,
                       double* val, double* gx, double* gy) noexcept nogil:
    cdef Py_ssize_t i, j, a
    cdef double u, v, rv, rdv
    cdef double upow[4]
    cdef double dupow[4]
    cdef const double* c
    _locate(p, x, y, &i, &j, &u, &v)
    c = p.coef + (i * p.nxc + j) * 16
    upow[0] = 1.0; upow[1] = u; upow[2] = u * u; upow[3] = u * u * u
    dupow[0] = 0.0; dupow[1] = 1.0; dupow[2] = 2.0 * u; dupow[3] = 3.0 * u * u
    val[0] = 0.0
    gx[0] = 0.0
    gy[0] = 0.0
    for a in range(4):
        rv = c[4 * a] + v * (c[4 * a + 1] + v * (c[4 * a + 2] + v * c[4 * a + 3]))
        rdv = c[4 * a + 1] + v * (2.0 * c[4 * a + 2] + 3.0 * v * c[4 * a + 3])
        val[0] += upow[a] * rv
        gx[0] += dupow[a] * rv
        gy[0] += upow[a] * rdv
    gx[0] /= p.hx
    gy[0] /= p.hy


cdef inline void _field(const Patch* p, double x, double y, double* fx, double* fy) noexcept nogil:
    cdef double val, gx, gy
    _eval(p, x, y, &val, &gx, &gy)
    fx[0] = -gy
    fy[0] = gx


cdef inline void _rk4(const Patch* p, double* x, double* y, double dt) noexcept nogil:
    cdef double k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y
    _field(p, x[0], y[0], &k1x, &k1y)
    _field(p, x[0] + 0.5 * dt * k1x, y[0] + 0.5 * dt * k1y, &k2x, &k2y)
    _field(p, x[0] + 0.5 * dt * k2x, y[0] + 0.5 * dt * k2y, &k3x, &k3y)
    _field(p, x[0] + dt * k3x, y[0] + dt * k3y, &k4x, &k4y)
    x[0] = x[0] + dt * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
    y[0] = y[0] + dt * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0


cdef inline bint _inside(const Patch* p, double x, double y) noexcept nogil:
    return (x >= p.x0 and x <= p.x0 + p.nxc * p.hx and
            y >= p.y0 and y <= p.y0 + p.nyc * p.hy)


cdef Patch _patch(const double[:, :, :, ::1] coef, double x0, double y0, double hx, double hy):
    cdef Patch p
    p.coef = &coef[0, 0, 0, 0]
    p.nyc = coef.shape[0]
    p.nxc = coef.shape[1]
    p.x0 = x0
    p.y0 = y0
    p.hx = hx
    p.hy = hy
    return p


def eval_bicubic(const double[:, :, :, ::1] coef, double x0, double y0, double hx, double hy,
                 const double[::1] xs, const double[::1] ys):
    cdef Patch p = _patch(coef, x0, y0, hx, hy)
    cdef Py_ssize_t n = xs.shape[0], k
    val = np.empty(n)
    gxa = np.empty(n)
    gya = np.empty(n)
    cdef double[::1] vv = val, gg = gxa, hh = gya
    with nogil:
        for k in range(n):
            _eval(&p, xs[k], ys[k], &vv[k], &gg[k], &hh[k])
    return val, gxa, gya


def rk4_step(const double[:, :, :, ::1] coef, double x0, double y0, double hx, double hy,
             double x, double y, double dt):
    cdef Patch p = _patch(coef, x0, y0, hx, hy)
    _rk4(&p, &x, &y, dt)
    return x, y


def trace_closed(const double[:, :, :, ::1] coef, double x0, double y0, double hx, double hy,
                 double sx, double sy, double step_len, double dt_max, Py_ssize_t max_steps,
                 double close_tol):
    cdef Patch p = _patch(coef, x0, y0, hx, hy)
    ts_a = np.empty(max_steps + 1)
    xs_a = np.empty(max_steps + 1)
    ys_a = np.empty(max_steps + 1)
    cdef double[::1] ts = ts_a, xs = xs_a, ys = ys_a
    cdef double x = sx, y = sy, t = 0.0, dt, val, gx, gy, speed, v0x, v0y
    cdef Py_ssize_t k, n = 1
    cdef bint left_ball = False
    cdef int status = MAX_STEPS
    ts[0] = 0.0
    xs[0] = x
    ys[0] = y
    _eval(&p, x, y, &val, &gx, &gy)
    speed = hypot(gx, gy)
    if speed < 1e-14:
        return ZERO_GRADIENT, ts_a[:1], xs_a[:1], ys_a[:1]
    v0x = -gy
    v0y = gx
    with nogil:
        for k in range(max_steps):
            dt = step_len / speed
            if dt > dt_max:
                dt = dt_max
            _rk4(&p, &x, &y, dt)
            t += dt
            ts[n] = t
            xs[n] = x
            ys[n] = y
            n += 1
            if not _inside(&p, x, y):
                status = LEFT_GRID
                break
            _eval(&p, x, y, &val, &gx, &gy)
            speed = hypot(gx, gy)
            if speed < 1e-14:
                status = ZERO_GRADIENT
                break
            if hypot(x - sx, y - sy) > close_tol:
                left_ball = True
            elif left_ball and (-gy * v0x + gx * v0y) > 0.0:
                status = CLOSED
                break
    return status, ts_a[:n].copy(), xs_a[:n].copy(), ys_a[:n].copy()


def rk4_fixed(const double[:, :, :, ::1] coef, double x0, double y0, double hx, double hy,
              double sx, double sy, double dt, Py_ssize_t nsteps):
    cdef Patch p = _patch(coef, x0, y0, hx, hy)
    xs_a = np.empty(nsteps + 1)
    ys_a = np.empty(nsteps + 1)
    cdef double[::1] xs = xs_a, ys = ys_a
    cdef double x = sx, y = sy
    cdef Py_ssize_t k
    cdef int status = CLOSED
    cdef Py_ssize_t n = nsteps + 1
    xs[0] = x
    ys[0] = y
    with nogil:
        for k in range(nsteps):
            _rk4(&p, &x, &y, dt)
            xs[k + 1] = x
            ys[k + 1] = y
            if not _inside(&p, x, y):
                status = LEFT_GRID
                n = k + 2
                break
    return status, xs_a[:n].copy(), ys_a[:n].copy()


def polyline_distance(const double[::1] px, const double[::1] py,
                      const double[::1] qx, const double[::1] qy):
    cdef Py_ssize_t n = px.shape[0], m = qx.shape[0], a, b, b1, bbest
    out_a = np.empty(n)
    seg_a = np.empty(n, dtype=np.intp)
    t_a = np.empty(n)
    cdef double[::1] out = out_a, tout = t_a
    cdef Py_ssize_t[::1] seg = seg_a
    cdef double ex, ey, ll, t, tbest, dx, dy, d2, best
    with nogil:
        for a in range(n):
            best = 1e300
            bbest = 0
            tbest = 0.0
            for b in range(m):
                b1 = b + 1
                if b1 == m:
                    b1 = 0
                ex = qx[b1] - qx[b]
                ey = qy[b1] - qy[b]
                ll = ex * ex + ey * ey
                if ll > 0.0:
                    t = ((px[a] - qx[b]) * ex + (py[a] - qy[b]) * ey) / ll
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                dx = px[a] - (qx[b] + t * ex)
                dy = py[a] - (qy[b] + t * ey)
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
                    bbest = b
                    tbest = t
            out[a] = sqrt(best)
            seg[a] = bbest
            tout[a] = tbest
    return out_a, seg_a, t_a
