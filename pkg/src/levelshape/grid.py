"""Uniform rectangular grids, nodal fields, discrete operators and quadrature.

Nodal arrays are stored with shape ``(ny, nx)``: row ``i`` runs along the
second coordinate, column ``j`` along the first, so that
``node(i, j) = (x0 + j*hx, y0 + i*hy)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels


class OutOfDomainError(ValueError):
    """A point lies outside the grid bounding box."""


class FieldFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    x0: float
    y0: float
    hx: float
    hy: float

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3 nodes per axis, got {self.nx}x{self.ny}")
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("grid spacings must be positive")

    @classmethod
    def from_box(cls, x0, y0, width, height, nx, ny=None) -> "Grid2D":
        ny = nx if ny is None else ny
        return cls(int(nx), int(ny), float(x0), float(y0), width / (nx - 1), height / (ny - 1))

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def size(self):
        return self.nx * self.ny

    @property
    def x1(self):
        return self.x0 + (self.nx - 1) * self.hx

    @property
    def y1(self):
        return self.y0 + (self.ny - 1) * self.hy

    @property
    def h(self):
        return max(self.hx, self.hy)

    def node(self, i, j):
        return (self.x0 + j * self.hx, self.y0 + i * self.hy)

    def axes(self):
        return (self.x0 + self.hx * np.arange(self.nx), self.y0 + self.hy * np.arange(self.ny))

    def coords(self):
        """Return ``(X, Y)`` nodal coordinate arrays of shape ``(ny, nx)``."""
        xs, ys = self.axes()
        return np.meshgrid(xs, ys)

    def boundary_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m

    def interior_mask(self):
        return ~self.boundary_mask()

    def weights(self):
        """Trapezoid quadrature weights per node."""
        wx = np.full(self.nx, self.hx)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny, self.hy)
        wy[[0, -1]] *= 0.5
        return np.outer(wy, wx)

    def contains(self, x, y, strict=False):
        x = np.asarray(x)
        y = np.asarray(y)
        if strict:
            return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)
        return (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)

    def dist_to_boundary(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.minimum(np.minimum(x - self.x0, self.x1 - x), np.minimum(y - self.y0, self.y1 - y))

    def header(self):
        return (f"field v1 nx={self.nx} ny={self.ny} x0={self.x0:.17g} y0={self.y0:.17g} "
                f"hx={self.hx:.17g} hy={self.hy:.17g}")


@dataclass(eq=False)
class ScalarField:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> "ScalarField":
        X, Y = grid.coords()
        return cls(grid, np.broadcast_to(np.asarray(fn(X, Y), dtype=float), grid.shape).copy())

    @classmethod
    def constant(cls, grid: Grid2D, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    @property
    def flat(self):
        return self.values.ravel()

    def max_abs(self):
        return float(np.max(np.abs(self.values)))

    def interpolant(self) -> "Interpolant":
        return Interpolant(self)


@dataclass(frozen=True)
class ObservationSet:
    """Observation subdomain ``E`` (axis-aligned rectangle or disk)."""

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind == "disk":
            if len(self.params) != 3 or self.params[2] <= 0:
                raise ValueError("disk needs (cx, cy, radius>0)")
        elif self.kind == "rectangle":
            if len(self.params) != 4 or self.params[2] <= 0 or self.params[3] <= 0:
                raise ValueError("rectangle needs (cx, cy, half_width>0, half_height>0)")
        else:
            raise ValueError(f"unknown observation set kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @classmethod
    def disk(cls, cx, cy, radius):
        return cls("disk", (cx, cy, radius))

    @classmethod
    def rectangle(cls, cx, cy, half_width, half_height):
        return cls("rectangle", (cx, cy, half_width, half_height))

    def contains(self, x, y, closed=True):
        """Indicator of E (``closed=False``) or its closure."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "disk":
            cx, cy, r = self.params
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            return d2 <= r * r if closed else d2 < r * r
        cx, cy, ax, ay = self.params
        if closed:
            return (np.abs(x - cx) <= ax) & (np.abs(y - cy) <= ay)
        return (np.abs(x - cx) < ax) & (np.abs(y - cy) < ay)

    def signed_distance(self, x, y):
        """Approximate signed distance to the boundary of E (negative inside)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "disk":
            cx, cy, r = self.params
            return np.hypot(x - cx, y - cy) - r
        cx, cy, ax, ay = self.params
        dx = np.abs(x - cx) - ax
        dy = np.abs(y - cy) - ay
        outside = np.hypot(np.maximum(dx, 0.0), np.maximum(dy, 0.0))
        return outside + np.minimum(np.maximum(dx, dy), 0.0)

    def bbox(self):
        if self.kind == "disk":
            cx, cy, r = self.params
            return (cx - r, cx + r, cy - r, cy + r)
        cx, cy, ax, ay = self.params
        return (cx - ax, cx + ax, cy - ay, cy + ay)

    def distance_to_grid_boundary(self, grid: Grid2D) -> float:
        xa, xb, ya, yb = self.bbox()
        return float(min(xa - grid.x0, grid.x1 - xb, ya - grid.y0, grid.y1 - yb))

    def check_inside(self, grid: Grid2D):
        if self.distance_to_grid_boundary(grid) <= 0:
            raise ValueError("closure of the observation set must lie strictly inside D")

    def node_mask(self, grid: Grid2D, closed=True):
        X, Y = grid.coords()
        return self.contains(X, Y, closed=closed)

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}


def region_mask(grid: Grid2D, region: str, obs: ObservationSet | None = None):
    """Nodal indicator for ``region`` in ``{"D", "E", "D\\E"}``."""
    if region == "D":
        return np.ones(grid.shape, dtype=bool)
    if obs is None:
        raise ValueError(f"region {region!r} needs an observation set")
    if region == "E":
        return obs.node_mask(grid, closed=False)
    if region in ("D\\E", "D-E"):
        return ~obs.node_mask(grid, closed=False)
    raise ValueError(f"unknown region {region!r}")


def integrate(u: ScalarField, region: str = "D", obs: ObservationSet | None = None) -> float:
    """Composite trapezoid quadrature of ``u`` over a region, indicator sampled at nodes."""
    w = u.grid.weights() * region_mask(u.grid, region, obs)
    return float(np.sum(w * u.values))


def laplacian(u: ScalarField) -> ScalarField:
    """Five-point Laplacian at interior nodes, zero on the boundary."""
    g = u.grid
    v = u.values
    out = np.zeros_like(v)
    out[1:-1, 1:-1] = ((v[1:-1, :-2] + v[1:-1, 2:]) / g.hx**2
                       + (v[:-2, 1:-1] + v[2:, 1:-1]) / g.hy**2
                       - 2.0 * v[1:-1, 1:-1] * (1.0 / g.hx**2 + 1.0 / g.hy**2))
    return ScalarField(g, out)


def laplacian_matrix(grid: Grid2D) -> sp.csr_matrix:
    """Sparse five-point Laplacian acting on all nodes; boundary rows are zero."""
    nx = grid.nx
    idx = np.arange(grid.size).reshape(grid.shape)
    inner = idx[1:-1, 1:-1].ravel()
    cx, cy = 1.0 / grid.hx**2, 1.0 / grid.hy**2
    rows = np.concatenate([inner] * 5)
    cols = np.concatenate([inner, inner - 1, inner + 1, inner - nx, inner + nx])
    vals = np.concatenate([np.full(inner.size, -2.0 * (cx + cy)), np.full(inner.size, cx),
                           np.full(inner.size, cx), np.full(inner.size, cy), np.full(inner.size, cy)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.size, grid.size))


def neg_laplacian_dirichlet(grid: Grid2D, unknown: np.ndarray) -> sp.csc_matrix:
    """``-Laplacian`` restricted to the ``unknown`` nodes, zero Dirichlet data elsewhere."""
    ids = np.flatnonzero(unknown.ravel())
    A = -laplacian_matrix(grid)
    return A[ids][:, ids].tocsc()


def _deriv_1d(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order finite-difference derivative along ``axis`` (exact for quartics)."""
    f = np.moveaxis(f, axis, 0)
    n = f.shape[0]
    if n < 5:
        d = np.gradient(f, h, axis=0, edge_order=2)
        return np.moveaxis(d, 0, axis)
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
    d[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * h)
    d[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * h)
    return np.moveaxis(d, 0, axis)


_HERMITE = np.array([[1.0, 0.0, 0.0, 0.0],
                     [0.0, 0.0, 1.0, 0.0],
                     [-3.0, 3.0, -2.0, -1.0],
                     [2.0, -2.0, 1.0, 1.0]])


def bicubic_coefficients(values: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """Per-cell Hermite bicubic coefficients ``c[i, j, a, b]`` of ``u**a v**b``.

    Node derivatives come from fourth-order differences, so the patchwork is
    C1, interpolates the nodal values and reproduces polynomials of degree
    three in each variable exactly.
    """
    f = values
    fu = _deriv_1d(f, hx, axis=1) * hx
    fv = _deriv_1d(f, hy, axis=0) * hy
    fuv = _deriv_1d(_deriv_1d(f, hx, axis=1), hy, axis=0) * hx * hy

    def corners(a):
        # (cell_i, cell_j, ucorner, vcorner)
        out = np.empty(a[:-1, :-1].shape + (2, 2))
        out[..., 0, 0] = a[:-1, :-1]
        out[..., 1, 0] = a[:-1, 1:]
        out[..., 0, 1] = a[1:, :-1]
        out[..., 1, 1] = a[1:, 1:]
        return out

    F = np.empty(f[:-1, :-1].shape + (4, 4))
    F[..., :2, :2] = corners(f)
    F[..., :2, 2:] = corners(fv)
    F[..., 2:, :2] = corners(fu)
    F[..., 2:, 2:] = corners(fuv)
    return np.ascontiguousarray(np.einsum("ak,ijkl,bl->ijab", _HERMITE, F, _HERMITE))


class Interpolant:
    """C1 bicubic interpolant of a nodal field with analytic derivatives."""

    def __init__(self, source: ScalarField):
        self.source = source
        self.grid = source.grid
        self.coef = bicubic_coefficients(source.values, self.grid.hx, self.grid.hy)

    def _check(self, x, y):
        if not np.all(self.grid.contains(x, y)):
            raise OutOfDomainError("evaluation point outside the grid bounding box")

    def evaluate(self, x, y):
        """Return ``(value, dgdx, dgdy)`` at points (arrays or scalars)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self._check(x, y)
        shape = np.broadcast(x, y).shape
        xs = np.ascontiguousarray(np.broadcast_to(x, shape).ravel())
        ys = np.ascontiguousarray(np.broadcast_to(y, shape).ravel())
        g = self.grid
        v, gx, gy = kernels.eval_bicubic(self.coef, g.x0, g.y0, g.hx, g.hy, xs, ys)
        return v.reshape(shape), gx.reshape(shape), gy.reshape(shape)

    def __call__(self, x, y):
        return self.evaluate(x, y)[0]

    def gradient(self, x, y):
        _, gx, gy = self.evaluate(x, y)
        return np.stack([gx, gy], axis=-1)


def gradient(u: ScalarField, p) -> np.ndarray:
    """Analytic gradient of the bicubic interpolant of ``u`` at point ``p``."""
    x, y = float(p[0]), float(p[1])
    if not bool(u.grid.contains(x, y, strict=True)):
        raise OutOfDomainError(f"point {p} is not strictly inside the grid")
    return u.interpolant().gradient(x, y)


def write_field(path, u: ScalarField) -> None:
    lines = [u.grid.header()]
    lines.extend(f"{v:.17g}" for v in u.values.ravel())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_field(path) -> ScalarField:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"field file not found: {path}")
    lines = path.read_text(encoding="utf-8").split("\n")
    head = lines[0].split()
    if head[:2] != ["field", "v1"]:
        raise FieldFormatError(f"{path}: not a v1 field file")
    try:
        kv = dict(tok.split("=", 1) for tok in head[2:])
        grid = Grid2D(int(kv["nx"]), int(kv["ny"]), float(kv["x0"]), float(kv["y0"]),
                      float(kv["hx"]), float(kv["hy"]))
    except (KeyError, ValueError) as exc:
        raise FieldFormatError(f"{path}: bad header: {exc}") from exc
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != grid.size:
        raise FieldFormatError(f"{path}: expected {grid.size} values, found {len(body)}")
    return ScalarField(grid, np.array([float(b) for b in body]))
