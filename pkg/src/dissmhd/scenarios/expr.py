"""Arithmetic expressions over ``(t, x, y, z)`` for boundary and initial data.

Grammar (a subset of Python expression syntax)::

    expr   := expr ('+' | '-' | '*' | '/' | '**') expr
            | ('-' | '+') expr
            | NUMBER | NAME | FUNC '(' expr (',' expr)* ')' | '(' expr ')'
    NAME   := t | x | y | z | pi | e
    FUNC   := sin | cos | tan | exp | log | sqrt | abs | tanh | sinh | cosh
            | arctan | arctan2 | minimum | maximum | where_pos

``where_pos(c, a, b)`` is ``a`` where ``c > 0`` and ``b`` elsewhere.
Anything else (attributes, subscripts, comprehensions, other names) is
rejected before evaluation.
"""
from __future__ import annotations

import ast
import math

import numpy as np

__all__ = ["ExprError", "compile_expr"]

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "abs": np.abs, "tanh": np.tanh, "sinh": np.sinh, "cosh": np.cosh, "arctan": np.arctan,
    "arctan2": np.arctan2, "minimum": np.minimum, "maximum": np.maximum,
    "where_pos": lambda c, a, b: np.where(np.asarray(c) > 0, a, b),
}
_CONSTS = {"pi": math.pi, "e": math.e}
_VARS = ("t", "x", "y", "z")
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


class ExprError(ValueError):
    pass


def _check(node, src):
    if isinstance(node, ast.Expression):
        return _check(node.body, src)
    if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check(node.left, src)
        _check(node.right, src)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNARY):
        _check(node.operand, src)
        return
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return
    if isinstance(node, ast.Name):
        if node.id in _VARS or node.id in _CONSTS:
            return
        raise ExprError(f"unknown name {node.id!r} in {src!r}")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExprError(f"unknown function in {src!r}")
        if node.keywords:
            raise ExprError(f"keyword arguments not allowed in {src!r}")
        for a in node.args:
            _check(a, src)
        return
    raise ExprError(f"unsupported syntax {type(node).__name__} in {src!r}")


def compile_expr(src):
    """Return ``f(t, x, y, z)`` for an expression string (or a number)."""
    if isinstance(src, (int, float)) and not isinstance(src, bool):
        value = float(src)
        return lambda t, x, y, z: value + 0.0 * (x + y + z)
    if not isinstance(src, str):
        raise ExprError(f"expression must be a string or number, got {type(src).__name__}")
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExprError(f"cannot parse {src!r}: {exc.msg}") from None
    _check(tree, src)
    code = compile(tree, "<expr>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def f(t, x, y, z):
        with np.errstate(all="ignore"):
            v = eval(code, env, {"t": t, "x": x, "y": y, "z": z})
        return v + 0.0 * (x + y + z)

    f.source = src
    return f
