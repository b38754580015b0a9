"""Trace generation on the tilted embedded chain.

Traces are simulated in fixed-size chunks of columns with numpy. For each
trace we keep exactly what estimation and the cross-entropy update need:

* ``z``        whether the property was satisfied,
* ``counts``   how often each command fired (``U_k``),
* ``log_l``    log of the likelihood ratio ``f(w, mu) / f(w, lam)``,
* ``denom``    ``D_k = sum_s K_k(s) / <K(s), lam>`` over every visited state
               in which a transition was taken, for every command ``k``.

The likelihood ratio is accumulated step by step in log space as
``log(mu_k / lam_k) + log(<K, lam> / <K, mu>)`` for the fired command.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .errors import ModelError
from .formula import Formula
from .model import Model, as_params, evaluate_rates, apply_command, mu
from .monitor import BatchMonitor

DEFAULT_MAX_STEPS = 10**6
CHUNK = 1024


@dataclass(frozen=True)
class TraceSummary:
    z: int
    steps: int
    counts: np.ndarray
    log_l: float
    denom: np.ndarray
    undecided: bool
    deadlock: bool = False


@dataclass
class TraceBatch:
    """Per-trace statistics of a batch, stored column-wise by trace index."""
    z: np.ndarray          # (N,) int8
    steps: np.ndarray      # (N,) int64
    counts: np.ndarray     # (N, n) int64
    log_l: np.ndarray      # (N,) float64
    denom: np.ndarray      # (N, n) float64
    undecided: np.ndarray  # (N,) bool
    deadlock: np.ndarray   # (N,) bool

    def __len__(self):
        return len(self.z)

    @property
    def hits(self) -> int:
        return int(self.z.sum())

    def summary(self, i: int) -> TraceSummary:
        return TraceSummary(int(self.z[i]), int(self.steps[i]), self.counts[i].copy(),
                            float(self.log_l[i]), self.denom[i].copy(),
                            bool(self.undecided[i]), bool(self.deadlock[i]))

    def summaries(self) -> list[TraceSummary]:
        return [self.summary(i) for i in range(len(self))]

    @classmethod
    def concat(cls, parts: Sequence["TraceBatch"]) -> "TraceBatch":
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("z", "steps", "counts", "log_l", "denom",
                               "undecided", "deadlock")))

    @classmethod
    def from_summaries(cls, items: Sequence[TraceSummary]) -> "TraceBatch":
        return cls(
            np.array([t.z for t in items], dtype=np.int8),
            np.array([t.steps for t in items], dtype=np.int64),
            np.array([t.counts for t in items], dtype=np.int64),
            np.array([t.log_l for t in items], dtype=np.float64),
            np.array([t.denom for t in items], dtype=np.float64),
            np.array([t.undecided for t in items], dtype=bool),
            np.array([t.deadlock for t in items], dtype=bool),
        )


def _run_chunk(model: Model, lam: np.ndarray, prop: Formula, keys: np.ndarray,
               max_steps: int, forced=None, dump=None) -> TraceBatch:
    cm = model.compiled
    mon = BatchMonitor(prop)
    n = model.n
    B = len(keys)
    mu_vec = mu(model)
    zero_lam = lam == 0
    with np.errstate(divide="ignore"):
        log_mu_over_lam = np.log(mu_vec / lam)

    S = cm.initial(B)
    codes = mon.valuations(cm.env(S), B)
    oid = mon.start(codes)
    last_codes = codes.copy()

    z = (oid == 1).astype(np.int8)
    steps = np.zeros(B, dtype=np.int64)
    counts = np.zeros((B, n), dtype=np.int64)
    log_l = np.zeros(B)
    denom = np.zeros((B, n))
    undecided = np.zeros(B, dtype=bool)
    deadlock = np.zeros(B, dtype=bool)
    active = oid >= 2
    if dump is not None:
        dump.append((0, "", cm.state_at(S, 0)))

    limit = max_steps if forced is None else min(max_steps, len(forced))
    for step in range(limit):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Sa = S[:, idx]
        K = cm.rates(Sa)
        total_mu = (mu_vec[:, None] * K).sum(axis=0)
        dead = total_mu == 0
        if dead.any():
            d = idx[dead]
            z[d] = mon.stutter(oid[d], last_codes[d])
            deadlock[d] = True
            active[d] = False
            live = ~dead
            idx, Sa, K, total_mu = idx[live], Sa[:, live], K[:, live], total_mu[live]
            if idx.size == 0:
                break
        if zero_lam.any() and (K[zero_lam] > 0).any():
            raise ValueError("a command with zero parameter is enabled; "
                             "the tilted chain would not be absolutely continuous")
        W = lam[:, None] * K
        total = W.sum(axis=0)
        denom[idx] += (K / total).T
        if forced is None:
            u = rng.uniforms(keys[idx], step)
            cum = np.cumsum(W / total, axis=0)
            below = u[None, :] < cum
            k = below.argmax(axis=0)
            # rounding can leave u above the last cumulative entry
            miss = ~below.any(axis=0)
            if miss.any():
                last_enabled = n - 1 - np.argmax((W[::-1] > 0), axis=0)
                k[miss] = last_enabled[miss]
        else:
            k = np.full(idx.size, int(forced[step]))
            if not (K[k, np.arange(idx.size)] > 0).all():
                raise ModelError(f"replayed command {model.commands[k[0]].name} "
                                 f"is not enabled at step {step}")
        log_l[idx] += log_mu_over_lam[k] + np.log(total / total_mu)
        counts[idx, k] += 1
        steps[idx] += 1
        Snew = cm.apply(Sa, k)
        S[:, idx] = Snew
        codes = mon.valuations(cm.env(Snew), idx.size)
        last_codes[idx] = codes
        oid[idx] = mon.step(oid[idx], codes)
        if dump is not None:
            dump.append((step + 1, model.commands[k[0]].name, cm.state_at(Snew, 0)))
        done = oid[idx] < 2
        if done.any():
            d = idx[done]
            z[d] = oid[d]
            active[d] = False

    # anything still undecided hit the cap or ran out of replay input; a
    # trace that stopped in a deadlock state is still closed as a deadlock
    left = np.flatnonzero(active)
    if left.size:
        K = cm.rates(S[:, left])
        dead = (mu_vec[:, None] * K).sum(axis=0) == 0
        d = left[dead]
        z[d] = mon.stutter(oid[d], last_codes[d])
        deadlock[d] = True
        undecided[left[~dead]] = True
    return TraceBatch(z, steps, counts, log_l, denom, undecided, deadlock)


def simulate_keys(model: Model, lam, prop: Formula, keys, max_steps: int = DEFAULT_MAX_STEPS,
                  workers: int | None = None) -> TraceBatch:
    """Simulate one trace per 64-bit key, in fixed chunks of :data:`CHUNK`."""
    lam = as_params(lam, model.n, allow_zero=True)
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    keys = np.asarray(keys, dtype=np.uint64)
    chunks = [keys[i:i + CHUNK] for i in range(0, len(keys), CHUNK)]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, *zip(*[
                (model, lam, prop, c, max_steps) for c in chunks])))
    else:
        parts = [_run_chunk(model, lam, prop, c, max_steps) for c in chunks]
    if not parts:
        return TraceBatch.from_summaries([])
    return TraceBatch.concat(parts)


def simulate_batch(model: Model, lam, prop: Formula, n: int, master_seed: int,
                   stream: int = rng.CE, iteration: int = 0,
                   max_steps: int = DEFAULT_MAX_STEPS, workers: int | None = None,
                   offset: int = 0) -> TraceBatch:
    """Simulate traces ``offset .. offset+n-1`` of one (seed, stream, iteration)."""
    keys = rng.trace_keys(master_seed, stream, iteration, np.arange(offset, offset + n))
    return simulate_keys(model, lam, prop, keys, max_steps, workers)


def simulate(model: Model, lam, prop: Formula, seed: int,
             max_steps: int = DEFAULT_MAX_STEPS) -> TraceSummary:
    """Generate a single trace whose random stream is keyed by ``seed``."""
    return simulate_keys(model, lam, prop, [seed & (2**64 - 1)], max_steps).summary(0)


def replay(model: Model, lam, prop: Formula, commands: Sequence[int],
           max_steps: int = DEFAULT_MAX_STEPS) -> TraceSummary:
    """Force the given command sequence and collect the same statistics."""
    lam = as_params(lam, model.n, allow_zero=True)
    return _run_chunk(model, lam, prop, np.zeros(1, dtype=np.uint64), max_steps,
                      forced=list(commands)).summary(0)


def trace_dump(model: Model, lam, prop: Formula, seed: int,
               max_steps: int = DEFAULT_MAX_STEPS):
    """Simulate one trace and return its summary with (step, command, state) rows."""
    lam = as_params(lam, model.n, allow_zero=True)
    rows: list = []
    batch = _run_chunk(model, lam, prop, np.array([seed & (2**64 - 1)], dtype=np.uint64),
                       max_steps, dump=rows)
    return batch.summary(0), rows


def log_path_density(model: Model, lam, commands: Sequence[int]) -> float:
    """Exact ``log f(w, lam)`` of a command sequence replayed from the initial state."""
    lam = np.asarray(lam, dtype=np.float64)
    state = model.initial_state()
    total = 0.0
    for step, k in enumerate(commands):
        rates = evaluate_rates(model, state)
        if rates[k] <= 0:
            raise ModelError(f"command {model.commands[k].name} not enabled at step {step}")
        total += np.log(lam[k] * rates[k]) - np.log(float(np.dot(lam, rates)))
        state = apply_command(model, state, k)
    return float(total)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("CESMC_WORKERS", "1")))
    except ValueError:
        return 1
