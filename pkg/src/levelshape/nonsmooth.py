"""Monotone piecewise-linear nonlinearities and the regularized Heaviside family."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class Kink:
    z: float
    convex: bool
    radius: float


@dataclass(frozen=True)
class NonsmoothFn:
    """Monotone continuous piecewise-linear map.

    ``slopes[k]`` applies on the k-th interval cut out by ``breakpoints``
    (``len(slopes) == len(breakpoints) + 1``); ``value_at_zero`` fixes the
    additive constant.
    """

    breakpoints: tuple = ()
    slopes: tuple = (1.0,)
    value_at_zero: float = 0.0
    name: str = "piecewise_linear"
    kinks: tuple = field(init=False, default=())

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        sl = tuple(float(s) for s in self.slopes)
        if len(sl) != len(bp) + 1:
            raise ParameterError("need exactly one more slope than breakpoints")
        if any(b1 >= b2 for b1, b2 in zip(bp, bp[1:])):
            raise ParameterError("breakpoints must be strictly increasing")
        if any(s < 0 for s in sl):
            raise ParameterError("slopes must be nonnegative (monotone increasing map)")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)
        kinks = []
        for k, z in enumerate(bp):
            if sl[k] == sl[k + 1]:
                continue
            gaps = [abs(z - w) for w in bp if w != z]
            radius = 0.5 * min(gaps) if gaps else 1.0
            kinks.append(Kink(z, sl[k + 1] > sl[k], radius))
        object.__setattr__(self, "kinks", tuple(kinks))
        # value of the map at each breakpoint, for evaluation
        vals = []
        for k, z in enumerate(bp):
            vals.append(self._integrate_slopes(0.0, z))
        object.__setattr__(self, "_bp_values", tuple(float(self.value_at_zero) + v for v in vals))

    def _slope_index(self, z):
        return np.searchsorted(np.asarray(self.breakpoints), z, side="right")

    def _integrate_slopes(self, a, b):
        """Integral of the slope function from ``a`` to ``b`` (scalars)."""
        sign = 1.0
        if b < a:
            a, b, sign = b, a, -1.0
        edges = [a] + [z for z in self.breakpoints if a < z < b] + [b]
        total = 0.0
        for lo, hi in zip(edges, edges[1:]):
            total += self.slopes[int(self._slope_index(0.5 * (lo + hi)))] * (hi - lo)
        return sign * total

    @property
    def nonsmooth_points(self):
        return tuple(k.z for k in self.kinks)

    @property
    def all_convex(self):
        return all(k.convex for k in self.kinks)

    def __call__(self, z):
        return self.eval(z)

    def eval(self, z):
        z = np.asarray(z, dtype=float)
        bp = np.asarray(self.breakpoints)
        sl = np.asarray(self.slopes)
        if bp.size == 0:
            return self.value_at_zero + sl[0] * z
        k = np.searchsorted(bp, z, side="right")
        # anchor each interval at its left breakpoint (or the first one)
        anchor_idx = np.clip(k - 1, 0, bp.size - 1)
        anchor = bp[anchor_idx]
        base = np.asarray(self._bp_values)[anchor_idx]
        return base + sl[k] * (z - anchor)

    def dplus(self, z):
        z = np.asarray(z, dtype=float)
        return np.asarray(self.slopes)[np.searchsorted(np.asarray(self.breakpoints), z, side="right")]

    def dminus(self, z):
        z = np.asarray(z, dtype=float)
        return np.asarray(self.slopes)[np.searchsorted(np.asarray(self.breakpoints), z, side="left")]

    def directional(self, z, direction):
        """``beta'(z; direction)``, positively homogeneous in ``direction``."""
        direction = np.asarray(direction, dtype=float)
        return np.where(direction >= 0, self.dplus(z) * direction, self.dminus(z) * direction)

    def to_dict(self):
        return {"name": self.name, "breakpoints": list(self.breakpoints),
                "slopes": list(self.slopes), "value_at_zero": self.value_at_zero}


def relu() -> NonsmoothFn:
    """``max(z, 0)``: one convex kink at the origin."""
    return NonsmoothFn((0.0,), (0.0, 1.0), 0.0, name="max0")


def shifted_kink(shift: float = 1.0) -> NonsmoothFn:
    """``z + max(z - shift, 0)``: convex kink away from the origin."""
    return NonsmoothFn((shift,), (1.0, 2.0), 0.0, name="shifted_kink")


def identity() -> NonsmoothFn:
    """Smooth control case ``z``; no kinks."""
    return NonsmoothFn((), (1.0,), 0.0, name="identity")


BUILTINS = {"max0": relu, "relu": relu, "shifted_kink": shifted_kink, "identity": identity}


def make_beta(name: str, params=None) -> NonsmoothFn:
    """Build a nonlinearity by name; ``piecewise_linear`` takes breakpoints/slopes."""
    params = dict(params or {})
    if name == "piecewise_linear":
        return NonsmoothFn(tuple(params.get("breakpoints", ())), tuple(params.get("slopes", (1.0,))),
                           float(params.get("value_at_zero", 0.0)))
    if name not in BUILTINS:
        raise ParameterError(f"unknown nonlinearity {name!r}; known: {sorted(BUILTINS)} or piecewise_linear")
    return BUILTINS[name](**params)


def beta_eval(f: NonsmoothFn, z):
    return f.eval(z)


def clarke_interval(f: NonsmoothFn, z):
    """Clarke generalized derivative interval ``[lo, hi]`` at ``z``."""
    a = f.dminus(z)
    b = f.dplus(z)
    return np.minimum(a, b), np.maximum(a, b)


def _check_eps(eps):
    if not np.all(np.asarray(eps) > 0):
        raise ParameterError(f"eps must be positive, got {eps}")


def heaviside_eval(eps: float, v):
    """C1 cubic ramp from 0 (``v <= 0``) to 1 (``v >= eps``)."""
    _check_eps(eps)
    v = np.asarray(v, dtype=float)
    s = np.clip(v / eps, 0.0, 1.0)
    return np.where(s >= 1.0, 1.0, s * s * (3.0 - 2.0 * s))


def heaviside_deriv(eps: float, v):
    _check_eps(eps)
    v = np.asarray(v, dtype=float)
    inside = (v > 0) & (v < eps)
    return np.where(inside, 6.0 * v * (eps - v) / eps**3, 0.0)


def heaviside_sharp(v):
    return (np.asarray(v) > 0).astype(float)


def psi_eval(z):
    """Normalized bump ``6 z (1 - z)`` on ``(0, 1)``, zero elsewhere."""
    z = np.asarray(z, dtype=float)
    return np.where((z > 0) & (z < 1), -6.0 * z * z + 6.0 * z, 0.0)


def psi_integral() -> float:
    # 3-point Gauss-Legendre is exact for the quadratic piece
    nodes, weights = np.polynomial.legendre.leggauss(3)
    z = 0.5 * (nodes + 1.0)
    return float(0.5 * np.sum(weights * psi_eval(z)))
