"""Kernel dispatch: compiled Cython kernels when built, pure Python otherwise.

Set ``LEVELSHAPE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("LEVELSHAPE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

CLOSED = _pykernels.CLOSED
LEFT_GRID = _pykernels.LEFT_GRID
MAX_STEPS = _pykernels.MAX_STEPS
ZERO_GRADIENT = _pykernels.ZERO_GRADIENT

eval_bicubic = _impl.eval_bicubic
rk4_step = _impl.rk4_step
trace_closed = _impl.trace_closed
rk4_fixed = _impl.rk4_fixed
polyline_distance = _impl.polyline_distance
