"""Guarded-command Markov models and their tilted jump probabilities.

A model is a list of commands ``[name] guard -> rate : x'=e, ...``. In a
state ``s`` command ``k`` has rate ``K_k(s)`` (zero when its guard is
false). Given a strictly positive tilting vector ``lam`` the embedded
discrete-time chain picks command ``k`` with probability
``lam[k] * K_k(s) / <K(s), lam>``. The untilted chain uses ``lam = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import Deadlock, ModelError

DEFAULT_LO = 0
DEFAULT_HI = 2**31 - 1

State = dict  # variable name -> int, in declaration order


@dataclass(frozen=True)
class VarDecl:
    name: str
    lo: int
    hi: int
    init: int


@dataclass(frozen=True)
class Command:
    name: str
    guard: ex.Expr
    rate: ex.Expr
    updates: tuple[tuple[str, ex.Expr], ...]


@dataclass(frozen=True)
class Label:
    name: str
    expr: ex.Expr


@dataclass(frozen=True, eq=True)
class Model:
    variables: tuple[VarDecl, ...]
    commands: tuple[Command, ...]
    labels: tuple[Label, ...] = ()
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.commands:
            raise ModelError("a model needs at least one command")
        names = [c.name for c in self.commands]
        if len(set(names)) != len(names):
            raise ModelError("command names must be unique")
        vnames = [v.name for v in self.variables]
        lnames = [lb.name for lb in self.labels]
        if len(set(vnames)) != len(vnames) or len(set(lnames)) != len(lnames):
            raise ModelError("duplicate variable or label name")
        if set(vnames) & set(lnames):
            raise ModelError("label names must differ from variable names")
        for v in self.variables:
            if not v.lo <= v.init <= v.hi:
                raise ModelError(f"initial value of {v.name} outside [{v.lo}..{v.hi}]")

    # the compiled closures are rebuilt after unpickling
    def __getstate__(self):
        return {k: v for k, v in self.__dict__.items() if k != "compiled"}

    @property
    def n(self) -> int:
        return len(self.commands)

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def command_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.commands)

    def command_index(self, name: str) -> int:
        return self.command_names.index(name)

    def label(self, name: str) -> Label:
        for lb in self.labels:
            if lb.name == name:
                return lb
        raise KeyError(name)

    def initial_state(self) -> State:
        return {v.name: v.init for v in self.variables}

    def state(self, values: Mapping[str, int] | Sequence[int]) -> State:
        """Build a full state from a mapping or a tuple in declaration order."""
        if isinstance(values, Mapping):
            out = {v.name: int(values[v.name]) for v in self.variables}
            extra = set(values) - set(out)
            if extra:
                raise ModelError(f"unknown variables {sorted(extra)}")
            return out
        values = tuple(values)
        if len(values) != len(self.variables):
            raise ModelError("state tuple has wrong length")
        return {v.name: int(x) for v, x in zip(self.variables, values)}

    def check_bounds(self, state: Mapping[str, int]) -> None:
        for v in self.variables:
            if not v.lo <= state[v.name] <= v.hi:
                raise ModelError(
                    f"variable {v.name}={state[v.name]} outside [{v.lo}..{v.hi}]")

    @cached_property
    def compiled(self) -> "CompiledModel":
        return CompiledModel(self)


def mu(model: Model) -> np.ndarray:
    """The untilted parameter vector: rates carry all of the dynamics."""
    return np.ones(model.n)


def as_params(lam, n: int, allow_zero: bool = False) -> np.ndarray:
    """Validate and copy a tilting vector."""
    lam = np.array(lam, dtype=np.float64).reshape(-1)
    if lam.shape != (n,):
        raise ValueError(f"expected {n} parameters, got {lam.shape[0]}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("parameters must be finite")
    if np.any(lam < 0) or (not allow_zero and np.any(lam == 0)):
        raise ValueError("parameters must be strictly positive")
    lam.flags.writeable = False
    return lam


def _state_text(state: Mapping[str, int]) -> str:
    return "{" + ", ".join(f"{k}:{v}" for k, v in state.items()) + "}"


def evaluate_rates(model: Model, state: Mapping[str, int]) -> np.ndarray:
    """Rate of every command in ``state``; 0 where the guard is false."""
    out = np.zeros(model.n)
    for k, cmd in enumerate(model.commands):
        try:
            if not ex.evaluate(cmd.guard, state):
                continue
            r = float(ex.evaluate(cmd.rate, state))
        except (ModelError, OverflowError, ZeroDivisionError) as err:
            raise ModelError(
                f"command {cmd.name} in state {_state_text(state)}: {err}") from None
        if not math.isfinite(r) or r < 0:
            raise ModelError(
                f"command {cmd.name} has invalid rate {r} in state {_state_text(state)}")
        out[k] = r
    return out


def transition_distribution(rates, lam) -> np.ndarray:
    """Jump probabilities ``lam_k K_k / <K, lam>``.

    Raises :class:`Deadlock` when the tilted total rate is zero.
    """
    rates = np.asarray(rates, dtype=np.float64)
    weighted = np.asarray(lam, dtype=np.float64) * rates
    total = weighted.sum()
    if not total > 0:
        raise Deadlock("no enabled command with positive tilted rate")
    return weighted / total


def apply_command(model: Model, state: Mapping[str, int], k: int) -> State:
    """Fire command ``k``; right-hand sides are all read from the pre-state."""
    cmd = model.commands[k]
    if not ex.evaluate(cmd.guard, state):
        raise ModelError(f"command {cmd.name} is not enabled in {_state_text(state)}")
    new = dict(state)
    for var, e in cmd.updates:
        try:
            value = ex.evaluate(e, state)
        except ModelError as err:
            raise ModelError(f"command {cmd.name}: {err}") from None
        if value != int(value):
            raise ModelError(f"command {cmd.name} assigns non-integer {value} to {var}")
        new[var] = int(value)
    for v in model.variables:
        if not v.lo <= new[v.name] <= v.hi:
            raise ModelError(
                f"command {cmd.name} drives {v.name} to {new[v.name]} outside "
                f"[{v.lo}..{v.hi}] from state {_state_text(state)}")
    return new


class CompiledModel:
    """Batch evaluation of a model over states stored column-wise.

    States are an int64 array of shape ``(n_vars, batch)``.
    """

    def __init__(self, model: Model):
        self.model = model
        self.names = model.var_names
        self.lo = np.array([v.lo for v in model.variables], dtype=np.int64)
        self.hi = np.array([v.hi for v in model.variables], dtype=np.int64)
        self.guards = [ex.compile_array(c.guard) for c in model.commands]
        self.rates_fn = [ex.compile_array(c.rate) for c in model.commands]
        self.updates = [
            [(self.names.index(var), ex.compile_array(e)) for var, e in c.updates]
            for c in model.commands
        ]

    def env(self, states: np.ndarray) -> dict[str, np.ndarray]:
        return {name: states[i] for i, name in enumerate(self.names)}

    def initial(self, batch: int) -> np.ndarray:
        init = np.array([v.init for v in self.model.variables], dtype=np.int64)
        return np.repeat(init[:, None], batch, axis=1)

    def rates(self, states: np.ndarray) -> np.ndarray:
        """Rates of all commands, shape ``(n, batch)``."""
        batch = states.shape[1]
        env = self.env(states)
        out = np.zeros((self.model.n, batch))
        with np.errstate(all="ignore"):
            for k in range(self.model.n):
                g = np.broadcast_to(self.guards[k](env), (batch,))
                if not g.any():
                    continue
                r = np.broadcast_to(np.asarray(self.rates_fn[k](env), dtype=np.float64),
                                    (batch,))
                bad = g & ~(np.isfinite(r) & (r >= 0))
                if bad.any():
                    j = int(np.flatnonzero(bad)[0])
                    raise ModelError(
                        f"command {self.model.commands[k].name} has invalid rate "
                        f"{r[j]} in state {_state_text(self.state_at(states, j))}")
                out[k] = np.where(g, r, 0.0)
        return out

    def apply(self, states: np.ndarray, chosen: np.ndarray) -> np.ndarray:
        """Fire ``chosen[j]`` in column ``j``; returns a new state array."""
        new = states.copy()
        for k, ups in enumerate(self.updates):
            if not ups:
                continue
            cols = np.flatnonzero(chosen == k)
            if cols.size == 0:
                continue
            pre = states[:, cols]
            env = self.env(pre)
            with np.errstate(all="ignore"):
                for i, fn in ups:
                    val = np.broadcast_to(fn(env), (cols.size,))
                    if val.dtype.kind == "f":
                        if not np.all(val == np.round(val)):
                            raise ModelError(
                                f"command {self.model.commands[k].name} assigns a "
                                f"non-integer value to {self.names[i]}")
                        val = val.astype(np.int64)
                    new[i, cols] = val
        bad = (new < self.lo[:, None]) | (new > self.hi[:, None])
        if bad.any():
            i, j = (int(a[0]) for a in np.nonzero(bad))
            k = int(chosen[j])
            raise ModelError(
                f"command {self.model.commands[k].name} drives {self.names[i]} to "
                f"{new[i, j]} outside [{self.lo[i]}..{self.hi[i]}] from state "
                f"{_state_text(self.state_at(states, j))}")
        return new

    def state_at(self, states: np.ndarray, j: int) -> State:
        return {name: int(states[i, j]) for i, name in enumerate(self.names)}
