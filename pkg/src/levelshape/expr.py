"""Tiny arithmetic grammar for field data: ``x1``, ``x2``, ``pi``, numbers, ``+ - * / **``,
``sin``, ``cos``, ``exp``, ``sqrt``, ``abs``, ``max``, ``min``.
"""
from __future__ import annotations

import ast

import numpy as np


class ExpressionError(ValueError):
    pass


_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "max": np.maximum,
    "min": np.minimum,
}
_CONSTS = {"pi": np.pi}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _check(node, src):
    if isinstance(node, ast.Expression):
        return _check(node.body, src)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return
    if isinstance(node, ast.Name):
        if node.id in ("x1", "x2") or node.id in _CONSTS:
            return
        raise ExpressionError(f"unknown name {node.id!r} in {src!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left, src)
        _check(node.right, src)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check(node.operand, src)
        return
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
        want = 2 if node.func.id in ("max", "min") else 1
        if len(node.args) != want:
            raise ExpressionError(f"{node.func.id} takes {want} argument(s) in {src!r}")
        for a in node.args:
            _check(a, src)
        return
    raise ExpressionError(f"unsupported syntax {type(node).__name__} in {src!r}")


def _eval(node, env):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else _CONSTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    return _FUNCS[node.func.id](*[_eval(a, env) for a in node.args])


def compile_expr(src: str):
    """Parse ``src`` once; return ``f(x1, x2)`` evaluating it on arrays."""
    if not isinstance(src, str) or not src.strip():
        raise ExpressionError("expression must be a non-empty string")
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {src!r}: {exc.msg}") from None
    _check(tree, src)
    body = tree.body

    def fn(x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        with np.errstate(all="ignore"):
            out = _eval(body, {"x1": x1, "x2": x2})
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x1, x2).shape).copy()

    fn.source = src
    return fn
