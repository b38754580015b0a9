"""Temporal property syntax trees and formula progression.

Properties are built from state atoms with ``!``, ``&``, ``|``, ``X``
(next), ``U`` (non-strict until) and ``F`` (eventually, stored as
``true U phi``). They are checked on finite simulation traces by
progression: after each observed state the formula is rewritten into the
obligation that the rest of the trace must meet, and simplified. The
verdict is decided once the obligation becomes ``true`` or ``false``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

from . import expr as ex


@dataclass(frozen=True)
class Atom:
    expr: ex.Expr  # boolean state expression


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Next:
    child: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


Formula = Union[Atom, Not, And, Or, Next, Until]

TRUE_ATOM = Atom(ex.Bool(True))


def Eventually(child: Formula) -> Until:
    return Until(TRUE_ATOM, child)


def is_eventually(f: Formula) -> bool:
    return isinstance(f, Until) and f.left == TRUE_ATOM


def is_state_formula(f: Formula) -> bool:
    """True when ``f`` contains no temporal operator."""
    if isinstance(f, Atom):
        return True
    if isinstance(f, Not):
        return is_state_formula(f.child)
    if isinstance(f, (And, Or)):
        return is_state_formula(f.left) and is_state_formula(f.right)
    return False


def atoms(f: Formula) -> list[ex.Expr]:
    """Distinct atom expressions in left-to-right order."""
    out: list[ex.Expr] = []

    def walk(g):
        if isinstance(g, Atom):
            if g.expr not in out:
                out.append(g.expr)
        elif isinstance(g, (Not, Next)):
            walk(g.child)
        else:
            walk(g.left)
            walk(g.right)

    walk(f)
    return out


def holds_in_state(f: Formula, state: Mapping[str, int]) -> bool:
    """Evaluate a state formula."""
    if isinstance(f, Atom):
        return bool(ex.evaluate(f.expr, state))
    if isinstance(f, Not):
        return not holds_in_state(f.child, state)
    if isinstance(f, And):
        return holds_in_state(f.left, state) and holds_in_state(f.right, state)
    if isinstance(f, Or):
        return holds_in_state(f.left, state) or holds_in_state(f.right, state)
    raise ValueError("not a state formula")


_FPREC = {Or: 1, And: 2, Until: 3}


def to_text(f: Formula, parent: int = 0) -> str:
    if isinstance(f, Atom):
        s = ex.to_text(f.expr)
        if isinstance(f.expr, (ex.Binary, ex.Unary)):
            return f"({s})"
        return s
    if isinstance(f, Not):
        return "!" + to_text(f.child, 4)
    if isinstance(f, Next):
        return "X " + to_text(f.child, 4)
    if is_eventually(f):
        return "F " + to_text(f.right, 4)
    prec = _FPREC[type(f)]
    op = {Or: "|", And: "&", Until: "U"}[type(f)]
    # U is right-associative, & and | left-associative
    if isinstance(f, Until):
        s = f"{to_text(f.left, prec + 1)} U {to_text(f.right, prec)}"
    else:
        s = f"{to_text(f.left, prec)} {op} {to_text(f.right, prec + 1)}"
    return f"({s})" if prec < parent else s


# --- progression over interned obligations ---------------------------------
#
# Obligations are tuples so they hash cheaply:
#   ("T",) ("F",) ("atom", i) ("not", o) ("and", frozenset) ("or", frozenset)
#   ("next", o) ("until", a, b)

OTRUE = ("T",)
OFALSE = ("F",)


def _mk_not(o):
    if o is OTRUE or o == OTRUE:
        return OFALSE
    if o == OFALSE:
        return OTRUE
    if o[0] == "not":
        return o[1]
    return ("not", o)


def _mk_junction(kind, items):
    unit, zero = (OTRUE, OFALSE) if kind == "and" else (OFALSE, OTRUE)
    flat = set()
    for it in items:
        if it == zero:
            return zero
        if it == unit:
            continue
        if it[0] == kind:
            flat |= it[1]
        else:
            flat.add(it)
    for it in flat:
        if _mk_not(it) in flat:
            return zero
    if not flat:
        return unit
    if len(flat) == 1:
        return next(iter(flat))
    return (kind, frozenset(flat))


def _mk_until(a, b):
    if b == OTRUE:
        return OTRUE
    if b == OFALSE:
        return OFALSE
    if a == OFALSE:
        return b
    return ("until", a, b)


class Progression:
    """Intern table of obligations with a memoised step function.

    Obligation ids ``0`` and ``1`` are ``false`` and ``true``.
    """

    def __init__(self, formula: Formula):
        self.formula = formula
        self.atom_exprs = atoms(formula)
        self._ids: dict = {}
        self._obls: list = []
        self._cache: dict = {}
        self.intern(OFALSE)
        self.intern(OTRUE)
        self.start = self.intern(self._lower(formula))

    def _lower(self, f):
        if isinstance(f, Atom):
            if isinstance(f.expr, ex.Bool):
                return OTRUE if f.expr.value else OFALSE
            return ("atom", self.atom_exprs.index(f.expr))
        if isinstance(f, Not):
            return _mk_not(self._lower(f.child))
        if isinstance(f, And):
            return _mk_junction("and", [self._lower(f.left), self._lower(f.right)])
        if isinstance(f, Or):
            return _mk_junction("or", [self._lower(f.left), self._lower(f.right)])
        if isinstance(f, Next):
            return ("next", self._lower(f.child))
        return _mk_until(self._lower(f.left), self._lower(f.right))

    def intern(self, o) -> int:
        i = self._ids.get(o)
        if i is None:
            i = len(self._obls)
            self._ids[o] = i
            self._obls.append(o)
        return i

    def obligation(self, i: int):
        return self._obls[i]

    def _prog(self, o, val):
        tag = o[0]
        if tag in ("T", "F"):
            return o
        if tag == "atom":
            return OTRUE if val[o[1]] else OFALSE
        if tag == "not":
            return _mk_not(self._prog(o[1], val))
        if tag in ("and", "or"):
            return _mk_junction(tag, [self._prog(c, val) for c in o[1]])
        if tag == "next":
            return o[1]
        a, b = o[1], o[2]
        return _mk_junction("or", [
            self._prog(b, val),
            _mk_junction("and", [self._prog(a, val), o]),
        ])

    def step(self, oid: int, val: tuple) -> int:
        """Obligation left after observing a state with atom values ``val``."""
        key = (oid, val)
        nxt = self._cache.get(key)
        if nxt is None:
            nxt = self.intern(self._prog(self._obls[oid], val))
            self._cache[key] = nxt
        return nxt

    def stutter(self, oid: int, val: tuple) -> bool:
        """Truth of obligation ``oid`` on the state ``val`` repeated forever."""
        def ev(o):
            tag = o[0]
            if tag == "T":
                return True
            if tag == "F":
                return False
            if tag == "atom":
                return bool(val[o[1]])
            if tag == "not":
                return not ev(o[1])
            if tag == "and":
                return all(ev(c) for c in o[1])
            if tag == "or":
                return any(ev(c) for c in o[1])
            if tag == "next":
                return ev(o[1])
            return ev(o[2])
        return ev(self._obls[oid])
