"""Arithmetic expressions in one variable ``x``, for potentials and coefficients.

Grammar: numeric literals, ``x``, ``pi``, ``e``, the binary operators
``+ - * / ^`` (``^`` is exponentiation, right associative), unary ``+ -``,
parentheses, and the functions ``exp log sqrt sin cos abs``.  Parsing goes
through :mod:`ast` with a whitelist; nothing is executed.

>>> Expression("x*(1-x)")(0.5)
0.25
>>> Expression("sqrt(1+x^2)")(0.0)
1.0
"""

from __future__ import annotations

import ast
import math
import operator

import numpy as np

from .errors import DomainError, ExpressionOverflow, ParseError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
}
_CONSTS = {"pi": math.pi, "e": math.e}


def _check(node, text):
    pos = getattr(node, "col_offset", None)
    if isinstance(node, ast.Expression):
        return _check(node.body, text)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ParseError(f"unsupported literal {node.value!r}", pos)
        return
    if isinstance(node, ast.Name):
        if node.id != "x" and node.id not in _CONSTS:
            raise ParseError(f"unknown name {node.id!r}", pos)
        return
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ParseError("unsupported operator", pos)
        _check(node.left, text)
        _check(node.right, text)
        return
    if isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ParseError("unsupported unary operator", pos)
        _check(node.operand, text)
        return
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ParseError("unknown function", pos)
        if len(node.args) != 1 or node.keywords:
            raise ParseError(f"{node.func.id} takes exactly one argument", pos)
        _check(node.args[0], text)
        return
    raise ParseError(f"unsupported syntax {type(node).__name__}", pos)


class Expression:
    """A parsed expression; call it with a float or a numpy array."""

    def __init__(self, text: str):
        if not isinstance(text, str) or not text.strip():
            raise ParseError("empty expression", 0)
        self.text = text
        if "**" in text:
            raise ParseError("use ^ for powers", text.index("**"))
        try:
            tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ParseError(f"syntax error in {text!r}", (exc.offset or 1) - 1) from None
        _check(tree, text)
        self._tree = tree.body

    def __repr__(self):
        return f"Expression({self.text!r})"

    def _eval(self, node, x):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return x if node.id == "x" else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            left = self._eval(node.left, x)
            right = self._eval(node.right, x)
            if isinstance(node.op, ast.Div) and np.any(np.asarray(right) == 0):
                raise DomainError(f"division by zero in {self.text!r}")
            if isinstance(node.op, ast.Pow):
                base = np.asarray(left)
                if np.any(base < 0) and not float(np.asarray(right).max()).is_integer():
                    raise DomainError(f"fractional power of a negative number in {self.text!r}")
                if np.any(base == 0) and np.any(np.asarray(right) < 0):
                    raise DomainError(f"zero raised to a negative power in {self.text!r}")
            return _BINOPS[type(node.op)](left, right)
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, x))
        name = node.func.id
        arg = self._eval(node.args[0], x)
        a = np.asarray(arg)
        if name == "log" and np.any(a <= 0):
            raise DomainError(f"log of a nonpositive number in {self.text!r}")
        if name == "sqrt" and np.any(a < 0):
            raise DomainError(f"sqrt of a negative number in {self.text!r}")
        return _FUNCS[name](arg)

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        xv = float(x) if scalar else np.asarray(x, dtype=float)
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            try:
                val = self._eval(self._tree, xv)
            except OverflowError as exc:
                raise ExpressionOverflow(f"{self.text!r} overflows at x = {x!r}") from None
            except FloatingPointError as exc:
                if "overflow" in str(exc):
                    raise ExpressionOverflow(f"{self.text!r} overflows at x = {x!r}") from None
                raise DomainError(f"{self.text!r} is not finite at x = {x!r}: {exc}") from None
        if scalar:
            return float(val)
        return np.broadcast_to(np.asarray(val, dtype=float), np.shape(xv)).copy()


def expr_eval(expression: str, x):
    """Evaluate ``expression`` at ``x``."""
    return Expression(expression)(x)
