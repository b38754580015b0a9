"""Incremental property monitors over growing finite traces.

A trace ends in one of two ways. On a deadlock the last state repeats
forever, so the remaining obligation is decided exactly on that constant
suffix. On hitting the step cap an undecided property is counted as not
satisfied and flagged, which keeps estimates conservative for
reachability-style properties.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import expr as ex
from . import formula as fm


class Verdict(enum.Enum):
    FALSE = 0
    TRUE = 1
    UNDECIDED = 2


class EndReason(enum.Enum):
    DEADLOCK = "deadlock"
    STEP_CAP = "step_cap"


def _verdict(oid: int) -> Verdict:
    if oid == 0:
        return Verdict.FALSE
    if oid == 1:
        return Verdict.TRUE
    return Verdict.UNDECIDED


@dataclass(frozen=True)
class MonitorState:
    progression: fm.Progression
    obligation: int
    last_values: tuple
    steps: int = 0

    @property
    def verdict(self) -> Verdict:
        return _verdict(self.obligation)


def _atom_values(prog: fm.Progression, state: Mapping[str, int]) -> tuple:
    return tuple(bool(ex.evaluate(a, state)) for a in prog.atom_exprs)


def monitor_init(prop: fm.Formula, initial: Mapping[str, int],
                 progression: fm.Progression | None = None) -> MonitorState:
    """Observe the initial state; the verdict may already be decided."""
    prog = progression or fm.Progression(prop)
    val = _atom_values(prog, initial)
    return MonitorState(prog, prog.step(prog.start, val), val, 0)


def monitor_step(ms: MonitorState, state: Mapping[str, int]) -> MonitorState:
    if ms.verdict is not Verdict.UNDECIDED:
        return ms
    val = _atom_values(ms.progression, state)
    return MonitorState(ms.progression, ms.progression.step(ms.obligation, val),
                        val, ms.steps + 1)


def monitor_finalize(ms: MonitorState, reason: EndReason) -> tuple[Verdict, bool]:
    """Close the trace. Returns the final verdict and the undecided flag."""
    v = ms.verdict
    if v is not Verdict.UNDECIDED:
        return v, False
    if reason is EndReason.DEADLOCK:
        ok = ms.progression.stutter(ms.obligation, ms.last_values)
        return (Verdict.TRUE if ok else Verdict.FALSE), False
    return Verdict.FALSE, True


class BatchMonitor:
    """Vectorised monitor: one obligation id per trace column."""

    def __init__(self, prop: fm.Formula):
        self.progression = fm.Progression(prop)
        self.atom_fns = [ex.compile_array(a) for a in self.progression.atom_exprs]
        self.m = len(self.atom_fns)
        if self.m > 48:
            raise ValueError("too many distinct atoms in property")

    def valuations(self, env: Mapping[str, np.ndarray], batch: int) -> np.ndarray:
        """Atom truth values packed into one integer per column."""
        codes = np.zeros(batch, dtype=np.int64)
        for i, fn in enumerate(self.atom_fns):
            bit = np.broadcast_to(fn(env), (batch,)).astype(np.int64)
            codes |= bit << i
        return codes

    def _unpack(self, code: int) -> tuple:
        return tuple(bool((code >> i) & 1) for i in range(self.m))

    def start(self, codes: np.ndarray) -> np.ndarray:
        return self.step(np.full(codes.shape, self.progression.start, dtype=np.int64), codes)

    def step(self, oids: np.ndarray, codes: np.ndarray) -> np.ndarray:
        keys = (oids << self.m) | codes
        uniq, inverse = np.unique(keys, return_inverse=True)
        mask = (1 << self.m) - 1
        nxt = np.array([
            self.progression.step(int(k) >> self.m, self._unpack(int(k) & mask))
            for k in uniq], dtype=np.int64)
        return nxt[inverse.reshape(-1)]

    def stutter(self, oids: np.ndarray, codes: np.ndarray) -> np.ndarray:
        return np.array([self.progression.stutter(int(o), self._unpack(int(c)))
                         for o, c in zip(oids, codes)], dtype=bool)
