"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--n 129] [--repeat 3]
"""
import argparse
import time

import numpy as np

from levelshape import _pykernels
from levelshape.grid import Grid2D, ScalarField

try:
    from levelshape import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n):
    grid = Grid2D.from_box(-1, -1, 2, 2, n)
    ip = ScalarField.from_function(grid, lambda x, y: x**2 + 0.5 * y**2 + 0.05 * np.sin(4 * x) - 0.2).interpolant()
    args = (ip.coef, grid.x0, grid.y0, grid.hx, grid.hy)
    h = grid.h
    pts = np.random.default_rng(0).uniform(-0.9, 0.9, size=(2, 20000))
    ring = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    qx, qy = 0.5 * np.cos(ring), 0.5 * np.sin(ring)
    px, py = 0.52 * np.cos(ring + 0.1), 0.52 * np.sin(ring + 0.1)
    return {
        "eval_bicubic (20k points)": lambda k: k.eval_bicubic(*args, pts[0], pts[1]),
        "trace_closed (step 0.1h)": lambda k: k.trace_closed(*args, 0.6, 0.0, 0.1 * h, np.inf, 10**6, 0.25 * h),
        "rk4_fixed (4096 steps)": lambda k: k.rk4_fixed(*args, 0.6, 0.0, 1e-3, 4096),
        "polyline_distance (2000x2000)": lambda k: k.polyline_distance(px, py, qx, qy),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=129)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    print(f"{'kernel':32s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, fn in cases(a.n).items():
        tp = best_of(lambda: fn(_pykernels), a.repeat)
        if _ckernels is None:
            print(f"{name:32s} {tp:11.4f} {'n/a':>11s} {'n/a':>8s}")
            continue
        tc = best_of(lambda: fn(_ckernels), a.repeat)
        print(f"{name:32s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}")


if __name__ == "__main__":
    main()
