"""Expression trees shared by guards, rates, updates, labels and atoms.

Every node can be evaluated two ways: :func:`evaluate` walks the tree for a
single state, :func:`compile_array` builds a closure that evaluates the
expression element-wise over a batch of states held as numpy arrays.
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

from .errors import ModelError


@dataclass(frozen=True)
class Num:
    value: Union[int, float]


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class LabelRef:
    """Reference to a named boolean label; carries the label body."""
    name: str
    body: "Expr"


@dataclass(frozen=True)
class Unary:
    op: str  # '-' or '!'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Bool, Var, LabelRef, Unary, Binary]

ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = ("<", "<=", "=", "!=", ">=", ">")
BOOL_OPS = ("&", "|")

_PREC = {"|": 1, "&": 2, "<": 3, "<=": 3, "=": 3, "!=": 3, ">=": 3, ">": 3,
         "+": 4, "-": 4, "*": 5, "/": 5}
_UNARY_PREC = 6

_SCALAR = {
    "+": operator.add, "-": operator.sub, "*": operator.mul,
    "<": operator.lt, "<=": operator.le, "=": operator.eq,
    "!=": operator.ne, ">=": operator.ge, ">": operator.gt,
}


def is_boolean(e: Expr) -> bool:
    if isinstance(e, (Bool, LabelRef)):
        return True
    if isinstance(e, Unary):
        return e.op == "!"
    if isinstance(e, Binary):
        return e.op in CMP_OPS or e.op in BOOL_OPS
    return False


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, LabelRef):
        return variables(e.body)
    if isinstance(e, Unary):
        return variables(e.operand)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    return set()


def evaluate(e: Expr, env: Mapping[str, int]):
    """Evaluate ``e`` in a single state given as a name -> value mapping."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Bool):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, LabelRef):
        return evaluate(e.body, env)
    if isinstance(e, Unary):
        v = evaluate(e.operand, env)
        return (not v) if e.op == "!" else -v
    op = e.op
    if op == "&":
        return bool(evaluate(e.left, env)) and bool(evaluate(e.right, env))
    if op == "|":
        return bool(evaluate(e.left, env)) or bool(evaluate(e.right, env))
    a = evaluate(e.left, env)
    b = evaluate(e.right, env)
    if op == "/":
        if b == 0:
            raise ModelError(f"division by zero in '{to_text(e)}'")
        return a / b
    r = _SCALAR[op](a, b)
    if isinstance(r, float) and not math.isfinite(r):
        raise ModelError(f"overflow in '{to_text(e)}'")
    return r


ArrayFn = Callable[[Mapping[str, np.ndarray]], np.ndarray]

_ARRAY = {
    "+": np.add, "-": np.subtract, "*": np.multiply, "/": np.true_divide,
    "<": np.less, "<=": np.less_equal, "=": np.equal, "!=": np.not_equal,
    ">=": np.greater_equal, ">": np.greater, "&": np.logical_and,
    "|": np.logical_or,
}


def compile_array(e: Expr) -> ArrayFn:
    """Compile ``e`` into a closure over a mapping of variable name -> array.

    The result may be a scalar when ``e`` does not mention any variable;
    callers broadcast. Division by zero yields inf/nan instead of raising,
    so the caller must check the entries it actually uses.
    """
    if isinstance(e, (Num, Bool)):
        value = e.value
        return lambda env: value
    if isinstance(e, Var):
        name = e.name
        return lambda env: env[name]
    if isinstance(e, LabelRef):
        return compile_array(e.body)
    if isinstance(e, Unary):
        inner = compile_array(e.operand)
        if e.op == "!":
            return lambda env: np.logical_not(inner(env))
        return lambda env: np.negative(inner(env))
    f = _ARRAY[e.op]
    left = compile_array(e.left)
    right = compile_array(e.right)
    if e.op == "/":
        return lambda env: f(np.asarray(left(env), dtype=np.float64), right(env))
    return lambda env: f(left(env), right(env))


def to_text(e: Expr, parent_prec: int = 0) -> str:
    """Render ``e`` with the minimal parentheses the parser needs."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Bool):
        return "true" if e.value else "false"
    if isinstance(e, (Var, LabelRef)):
        return e.name
    if isinstance(e, Unary):
        s = e.op + to_text(e.operand, _UNARY_PREC)
        return f"({s})" if parent_prec > _UNARY_PREC else s
    prec = _PREC[e.op]
    # comparisons are non-associative: parenthesise nested ones on both sides
    lhs_prec = prec + 1 if e.op in CMP_OPS else prec
    s = f"{to_text(e.left, lhs_prec)} {e.op} {to_text(e.right, prec + 1)}"
    need = prec < parent_prec
    return f"({s})" if need else s
