"""Parsers and printers for ``.gcm`` model files and property strings.

Model syntax, one declaration per ``;``::

    const k = 0.001;                       // inlined at parse time
    var x : [0..10] init 0;                // bounds default to [0..2^31-1]
    label done = x = 10;
    [inc] x < 10 -> 2 * x + 1 : x'=x+1;

Property syntax: ``F``, ``X``, ``U``, ``!``, ``&``, ``|`` and parentheses
over atoms ``expr <cmp> expr``, label names, ``true`` and ``false``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from . import expr as ex
from . import formula as fm
from .errors import ModelError, ParseError
from .model import DEFAULT_HI, DEFAULT_LO, Command, Label, Model, VarDecl

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|\.\.|<=|>=|!=|[\[\]();:,=<>+\-*/!&|'])
""", re.VERBOSE)

_KEYWORDS = {"var", "const", "label", "true", "false"}
_TEMPORAL = {"X", "F", "U"}


@dataclass(frozen=True)
class Token:
    kind: str  # 'num', 'ident', 'op', 'eof'
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        nl = m.group().count("\n")
        if nl:
            line += nl
            line_start = m.start() + m.group().rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        # name -> Expr (Var, Num for consts, LabelRef)
        self.scope: dict[str, ex.Expr] = {}

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def at(self, text) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def accept(self, text) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        tok = self.tok
        self.i += 1
        return tok

    def integer(self) -> int:
        neg = self.accept("-")
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit():
            raise self.error("expected integer")
        self.i += 1
        return -int(tok.text) if neg else int(tok.text)

    # --- expressions -----------------------------------------------------

    def expression(self) -> ex.Expr:
        return self._or()

    def _binary_chain(self, sub, ops, want_bool):
        left = sub()
        while self.tok.kind == "op" and self.tok.text in ops:
            op_tok = self.tok
            self.i += 1
            right = sub()
            for side in (left, right):
                if ex.is_boolean(side) != want_bool:
                    kind = "boolean" if want_bool else "numeric"
                    raise self.error(f"operator {op_tok.text!r} needs {kind} operands", op_tok)
            left = ex.Binary(op_tok.text, left, right)
        return left

    def _or(self):
        return self._binary_chain(self._and, ("|",), True)

    def _and(self):
        return self._binary_chain(self._not, ("&",), True)

    def _not(self):
        if self.at("!"):
            tok = self.tok
            self.i += 1
            operand = self._not()
            if not ex.is_boolean(operand):
                raise self.error("'!' needs a boolean operand", tok)
            return ex.Unary("!", operand)
        return self._comparison()

    def _comparison(self):
        left = self._sum()
        if self.tok.kind == "op" and self.tok.text in ex.CMP_OPS:
            op_tok = self.tok
            self.i += 1
            right = self._sum()
            if ex.is_boolean(left) or ex.is_boolean(right):
                raise self.error(f"operator {op_tok.text!r} needs numeric operands", op_tok)
            return ex.Binary(op_tok.text, left, right)
        return left

    def _sum(self):
        return self._binary_chain(self._product, ("+", "-"), False)

    def _product(self):
        return self._binary_chain(self._negation, ("*", "/"), False)

    def _negation(self):
        if self.at("-"):
            tok = self.tok
            self.i += 1
            operand = self._negation()
            if ex.is_boolean(operand):
                raise self.error("unary '-' needs a numeric operand", tok)
            if isinstance(operand, ex.Num):
                return ex.Num(-operand.value)
            return ex.Unary("-", operand)
        return self._primary()

    def _primary(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            if re.fullmatch(r"\d+", tok.text):
                return ex.Num(int(tok.text))
            return ex.Num(float(tok.text))
        if self.accept("("):
            e = self.expression()
            self.expect(")")
            return e
        if tok.kind == "ident":
            if tok.text in ("true", "false"):
                self.i += 1
                return ex.Bool(tok.text == "true")
            if tok.text in _KEYWORDS:
                raise self.error(f"unexpected keyword {tok.text!r}")
            self.i += 1
            try:
                return self.scope[tok.text]
            except KeyError:
                raise self.error(f"undeclared identifier {tok.text!r}", tok) from None
        raise self.error(f"unexpected {tok.text or 'end of input'!r}")

    # --- model -----------------------------------------------------------

    def model(self) -> Model:
        variables, labels, commands = [], [], []
        cmd_names = set()
        while self.tok.kind != "eof":
            tok = self.tok
            if self.accept("var"):
                name = self._fresh_name()
                lo, hi = DEFAULT_LO, DEFAULT_HI
                if self.accept(":"):
                    self.expect("[")
                    lo = self.integer()
                    self.expect("..")
                    hi = self.integer()
                    self.expect("]")
                    if lo > hi:
                        raise self.error(f"empty range for {name.text}", name)
                self.expect("init")
                init = self.integer()
                if not lo <= init <= hi:
                    raise self.error(f"initial value of {name.text} outside bounds", name)
                self.expect(";")
                variables.append(VarDecl(name.text, lo, hi, init))
                self.scope[name.text] = ex.Var(name.text)
            elif self.accept("const"):
                name = self._fresh_name()
                self.expect("=")
                value = self.expression()
                if ex.is_boolean(value) or ex.variables(value):
                    raise self.error("constants must be numeric literals", name)
                self.expect(";")
                try:
                    self.scope[name.text] = ex.Num(ex.evaluate(value, {}))
                except (ModelError, OverflowError) as err:
                    raise self.error(str(err), name) from None
            elif self.accept("label"):
                name = self._fresh_name()
                self.expect("=")
                body = self.expression()
                if not ex.is_boolean(body):
                    raise self.error(f"label {name.text} must be boolean", name)
                self.expect(";")
                labels.append(Label(name.text, body))
                self.scope[name.text] = ex.LabelRef(name.text, body)
            elif self.accept("["):
                name = self.ident()
                if name.text in cmd_names:
                    raise self.error(f"duplicate command name {name.text!r}", name)
                cmd_names.add(name.text)
                self.expect("]")
                gtok = self.tok
                guard = self.expression()
                if not ex.is_boolean(guard):
                    raise self.error("guard must be boolean", gtok)
                self.expect("->")
                rtok = self.tok
                rate = self.expression()
                if ex.is_boolean(rate):
                    raise self.error("rate must be numeric", rtok)
                self.expect(":")
                updates = [self._update()]
                while self.accept(","):
                    updates.append(self._update())
                targets = [u[0] for u in updates]
                if len(set(targets)) != len(targets):
                    raise self.error(f"command {name.text} assigns a variable twice", name)
                self.expect(";")
                commands.append(Command(name.text, guard, rate, tuple(updates)))
            else:
                raise self.error(f"unexpected {tok.text!r}; expected var, const, label or '['")
        if not commands:
            raise self.error("model has no commands")
        try:
            return Model(tuple(variables), tuple(commands), tuple(labels))
        except ModelError as err:
            raise ParseError(str(err)) from None

    def _fresh_name(self) -> Token:
        name = self.ident()
        if name.text in _KEYWORDS or name.text in self.scope:
            raise self.error(f"name {name.text!r} already in use", name)
        return name

    def _update(self):
        target = self.ident()
        if not isinstance(self.scope.get(target.text), ex.Var):
            raise self.error(f"{target.text!r} is not a declared variable", target)
        self.expect("'")
        self.expect("=")
        etok = self.tok
        value = self.expression()
        if ex.is_boolean(value):
            raise self.error("update must be numeric", etok)
        return (target.text, value)

    # --- properties --------------------------------------------------------

    def formula(self) -> fm.Formula:
        left = self._f_and()
        while self.accept("|"):
            left = fm.Or(left, self._f_and())
        return left

    def _f_and(self):
        left = self._f_until()
        while self.accept("&"):
            left = fm.And(left, self._f_until())
        return left

    def _f_until(self):
        left = self._f_unary()
        if self.accept("U"):
            return fm.Until(left, self._f_until())
        return left

    def _f_unary(self):
        if self.accept("!"):
            return fm.Not(self._f_unary())
        if self.accept("X"):
            return fm.Next(self._f_unary())
        if self.accept("F"):
            return fm.Eventually(self._f_unary())
        if self.at("("):
            # either a parenthesised formula or an atom such as (x + 1) > 2
            save = self.i
            try:
                return self._f_atom()
            except ParseError:
                self.i = save
            self.expect("(")
            f = self.formula()
            self.expect(")")
            return f
        return self._f_atom()

    def _f_atom(self):
        tok = self.tok
        if tok.kind == "ident" and tok.text in _TEMPORAL:
            raise self.error(f"unexpected operator {tok.text!r}")
        e = self._comparison()
        if not ex.is_boolean(e):
            raise self.error("atom must be a comparison, a label or true/false", tok)
        return _lift(e)


def _lift(e: ex.Expr) -> fm.Formula:
    """Move boolean connectives of a parenthesised atom to formula level."""
    if isinstance(e, ex.Unary) and e.op == "!":
        return fm.Not(_lift(e.operand))
    if isinstance(e, ex.Binary) and e.op == "&":
        return fm.And(_lift(e.left), _lift(e.right))
    if isinstance(e, ex.Binary) and e.op == "|":
        return fm.Or(_lift(e.left), _lift(e.right))
    return fm.Atom(e)


def parse_model(text: str, name: str = "") -> Model:
    """Parse model text; raises :class:`ParseError` with a location."""
    try:
        m = _Parser(text).model()
    except RecursionError:
        raise ParseError("expression nesting too deep") from None
    if name:
        object.__setattr__(m, "name", name)
    return m


def load_model(path) -> Model:
    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), name=path.stem)


def parse_property(text: str, model: Model) -> fm.Formula:
    """Parse a property against the identifiers declared in ``model``."""
    p = _Parser(text)
    for v in model.variables:
        p.scope[v.name] = ex.Var(v.name)
    for lb in model.labels:
        p.scope[lb.name] = ex.LabelRef(lb.name, lb.expr)
    try:
        f = p.formula()
        if p.tok.kind != "eof":
            raise p.error(f"unexpected {p.tok.text!r} after property")
    except RecursionError:
        raise ParseError("property nesting too deep") from None
    return f


def format_model(model: Model) -> str:
    lines = []
    for v in model.variables:
        lines.append(f"var {v.name} : [{v.lo}..{v.hi}] init {v.init};")
    for lb in model.labels:
        lines.append(f"label {lb.name} = {ex.to_text(lb.expr)};")
    for c in model.commands:
        ups = ", ".join(f"{var}'={ex.to_text(e)}" for var, e in c.updates)
        lines.append(f"[{c.name}] {ex.to_text(c.guard)} -> {ex.to_text(c.rate)} : {ups};")
    return "\n".join(lines) + "\n"


def format_property(f: fm.Formula) -> str:
    return fm.to_text(f)
