"""Iterated cross-entropy search for the tilting parameters.

Each iteration simulates ``N_j`` traces under the current parameters and
re-estimates every parameter with the fixed-point update

    lam_k <- sum_i l_i z_i U_k(w_i) / sum_i l_i z_i D_k(w_i)

where ``D_k`` was accumulated with the current parameters. Commands that
never fire in a satisfying trace are smoothed instead of being set to zero
and the vector is rescaled to a constant sum.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from . import rng
from .errors import InitialSearchFailed, InternalConsistencyError, NoHitsError
from .estimators import EstimateResult, weighted_result
from .formula import Eventually, Atom, Formula, atoms
from .model import Model, as_params, mu
from .simulate import DEFAULT_MAX_STEPS, TraceBatch, TraceSummary, simulate_batch

log = logging.getLogger(__name__)

HALVING = "halving"
ADDITIVE = "additive"
NO_SMOOTHING = "none"

# initial search: decades of log-uniform spread added per restart, and the cap
SPREAD_STEP = 0.1
MAX_SPREAD = 2.0


@dataclass(frozen=True)
class CEConfig:
    n_per_iteration: int = 1000
    max_iterations: int = 20
    smoothing: str = HALVING
    smoothing_fraction: float = 0.01
    normalisation_constant: float | None = None  # None: number of commands
    convergence_tol: float = 0.02
    convergence_window: int = 3
    stop_on_convergence: bool = True
    min_hits: int = 1
    master_seed: int = 0
    n0: int = 1000
    max_restarts: int = 100
    initial_candidates: int = 1
    max_steps: int = DEFAULT_MAX_STEPS
    workers: int | None = None

    def __post_init__(self):
        if min(self.n_per_iteration, self.n0, self.max_iterations, self.initial_candidates) < 1:
            raise ValueError("sample sizes and iteration counts must be at least 1")
        if self.convergence_tol <= 0 or self.convergence_window < 1:
            raise ValueError("convergence tolerance and window must be positive")
        if self.normalisation_constant is not None and self.normalisation_constant <= 0:
            raise ValueError("normalisation constant must be positive")
        if self.smoothing not in (HALVING, ADDITIVE, NO_SMOOTHING):
            raise ValueError(f"unknown smoothing strategy {self.smoothing!r}")

    def constant(self, model: Model) -> float:
        return float(model.n if self.normalisation_constant is None
                     else self.normalisation_constant)


@dataclass(frozen=True)
class CEIteration:
    iteration: int
    lam: np.ndarray        # normalised parameters used to simulate this batch
    n: int
    hits: int
    undecided: int
    gamma_hat: float
    sample_variance: float
    seen: np.ndarray       # commands that fired in at least one satisfying trace


@dataclass
class InitialSearch:
    lam: np.ndarray
    hits: int
    restarts: int                  # restart index of the returned vector
    batch: TraceBatch | None = field(default=None, repr=False)
    first_hit: int | None = None   # restart index of the first qualifying vector


@dataclass
class CEResult:
    lam: np.ndarray
    history: list[CEIteration]
    initial: InitialSearch | None = None
    converged_at: int | None = None
    batches: list[TraceBatch] = field(default_factory=list, repr=False)

    def lambdas(self) -> np.ndarray:
        return np.array([it.lam for it in self.history])


def _as_batch(summaries) -> TraceBatch:
    if isinstance(summaries, TraceBatch):
        return summaries
    return TraceBatch.from_summaries(list(summaries))


def ce_update(summaries: TraceBatch | Sequence[TraceSummary], lam_prev=None):
    """One fixed-point step. Returns raw parameters and per-command seen flags.

    ``lam_prev`` is only used for its length; the denominators already
    carry the parameters the traces were simulated with.
    """
    batch = _as_batch(summaries)
    hit = batch.z.astype(bool)
    if not hit.any():
        raise NoHitsError("no trace satisfied the property")
    log_w = batch.log_l[hit]
    # the update is a ratio, so a common factor on the weights cancels
    w = np.exp(log_w - log_w.max())
    counts = batch.counts[hit]
    denom = batch.denom[hit]
    n = counts.shape[1]
    if lam_prev is not None and len(lam_prev) != n:
        raise ValueError("parameter vector does not match the traces")
    num = np.array([math.fsum(w * counts[:, k]) for k in range(n)])
    den = np.array([math.fsum(w * denom[:, k]) for k in range(n)])
    seen = num > 0
    if np.any(seen & (den <= 0)):
        raise InternalConsistencyError("command fired but its denominator is zero")
    raw = np.zeros(n)
    raw[seen] = num[seen] / den[seen]
    return raw, seen


def apply_smoothing(raw, seen, lam_prev, strategy: str = HALVING,
                    fraction: float = 0.01) -> np.ndarray:
    """Keep commands unseen in satisfying traces alive.

    ``halving`` gives them half their previous value, ``additive`` adds a
    fraction of the previous value, ``none`` leaves them at zero.
    """
    raw = np.asarray(raw, dtype=np.float64)
    seen = np.asarray(seen, dtype=bool)
    prev = np.asarray(lam_prev, dtype=np.float64)
    out = raw.copy()
    if strategy == HALVING:
        out[~seen] = prev[~seen] / 2.0
    elif strategy == ADDITIVE:
        out[~seen] = raw[~seen] + fraction * prev[~seen]
    elif strategy != NO_SMOOTHING:
        raise ValueError(f"unknown smoothing strategy {strategy!r}")
    return out


def normalize(lam, constant: float, fixed=None) -> np.ndarray:
    """Scale ``lam`` so that its entries sum to ``constant``.

    Entries flagged in ``fixed`` keep their value and the others absorb the
    rest of the budget, so a halved parameter stays exactly halved.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if not lam.sum() > 0:
        raise ValueError("cannot normalise a vector without positive mass")
    if fixed is not None:
        fixed = np.asarray(fixed, dtype=bool)
        free_mass = lam[~fixed].sum()
        budget = constant - lam[fixed].sum()
        if fixed.any() and free_mass > 0 and budget > 0:
            out = lam.copy()
            out[~fixed] = lam[~fixed] * (budget / free_mass)
            return out
    return lam * (constant / lam.sum())


def find_initial(model: Model, prop: Formula, n0: int, seed: int,
                 max_restarts: int = 100, min_hits: int = 1,
                 max_steps: int = DEFAULT_MAX_STEPS, workers=None,
                 candidates: int = 1, spread_step: float = SPREAD_STEP) -> InitialSearch:
    """Find parameters under which ``n0`` traces show at least ``min_hits`` hits.

    The untilted parameters are tried first. Restart ``r`` then draws every
    entry log-uniformly from ``[10^-w, 10^w]`` with ``w = min(2, r * spread_step)``,
    so weakly tilted candidates come first: a first hit from a mildly tilted
    vector keeps the likelihood ratios of the first optimisation batch from
    degenerating onto a single trace.

    With ``candidates > 1`` the spread stays at the value of the first hit
    and the search keeps drawing until that many vectors qualify. It returns
    the one with the largest importance-sampling estimate: a vector that
    misses the dominant paths underestimates by orders of magnitude, so this
    guards against starting the optimisation in the wrong region.
    """
    if n0 < 1 or candidates < 1:
        raise ValueError("n0 and candidates must be at least 1")
    gen = rng.generator(seed, rng.INITIAL_SEARCH)
    lam = mu(model)
    found: list[tuple[float, InitialSearch]] = []
    spread = None
    first = 0
    for restart in range(max_restarts + 1):
        if restart > 0:
            w = spread if spread is not None else min(MAX_SPREAD, restart * spread_step)
            lam = 10.0 ** gen.uniform(-w, w, size=model.n)
        batch = simulate_batch(model, lam, prop, n0, seed, rng.INITIAL_SEARCH,
                               restart, max_steps=max_steps, workers=workers)
        log.debug("initial search %d: %d hits", restart, batch.hits)
        if batch.hits >= min_hits:
            if spread is None:
                first = restart
            cand = InitialSearch(lam, batch.hits, restart, batch, first)
            if restart == 0:
                return cand
            spread = w
            found.append((weighted_result(batch).gamma_hat, cand))
            if len(found) >= candidates:
                break
    if found:
        # first maximum wins ties, so the choice is deterministic
        return max(found, key=lambda t: t[0])[1]
    raise InitialSearchFailed(
        f"no candidate produced {min_hits} satisfying trace(s) in {max_restarts} restarts",
        _atom_diagnostics(model, prop, n0, seed, max_steps, workers))


def _atom_diagnostics(model, prop, n0, seed, max_steps, workers) -> dict:
    """Fraction of untilted traces on which each atom ever holds."""
    out = {}
    for i, a in enumerate(atoms(prop)):
        if isinstance(a, ex.Bool):
            continue
        batch = simulate_batch(model, mu(model), Eventually(Atom(a)), min(n0, 1000),
                               seed, rng.INITIAL_SEARCH, 10**6 + i,
                               max_steps=max_steps, workers=workers)
        out[ex.to_text(a)] = batch.hits / len(batch)
    return out


def _next(raw, seen, lam, const, config: CEConfig) -> np.ndarray:
    smoothed = apply_smoothing(raw, seen, lam, config.smoothing, config.smoothing_fraction)
    return normalize(smoothed, const, ~seen if config.smoothing == HALVING else None)


def ce_optimize(model: Model, prop: Formula, config: CEConfig,
                initial=None) -> CEResult:
    """Run the cross-entropy iteration; ``initial`` skips the restart search.

    After a search, the ``n0`` traces of the winning candidate already
    contain hits, so they provide the first update and the ``N_j`` iterations
    start from its result.
    """
    const = config.constant(model)
    search = None
    if initial is None:
        search = find_initial(model, prop, config.n0, config.master_seed,
                              config.max_restarts, config.min_hits,
                              config.max_steps, config.workers,
                              config.initial_candidates)
        initial = search.lam
    lam = normalize(as_params(initial, model.n), const)
    if search is not None:
        raw, seen = ce_update(search.batch, search.lam)
        # the update scales with the parameters it was simulated under
        raw *= const / float(np.sum(search.lam))
        lam = _next(raw, seen, lam, const, config)
    history: list[CEIteration] = []
    batches: list[TraceBatch] = []
    below = 0
    converged_at = None
    N = config.n_per_iteration
    for j in range(config.max_iterations):
        batch = simulate_batch(model, lam, prop, N, config.master_seed, rng.CE, j,
                               max_steps=config.max_steps, workers=config.workers)
        if batch.hits == 0:
            if j == 0:
                raise NoHitsError("first iteration produced no satisfying trace", history)
            log.info("iteration %d: no hits, retrying with %d traces", j, 2 * N)
            batch = simulate_batch(model, lam, prop, 2 * N, config.master_seed, rng.CE, j,
                                   max_steps=config.max_steps, workers=config.workers,
                                   offset=N)
            if batch.hits == 0:
                raise NoHitsError(f"iteration {j} produced no satisfying trace", history)
        est: EstimateResult = weighted_result(batch)
        raw, seen = ce_update(batch, lam)
        history.append(CEIteration(j, lam, len(batch), est.hits, est.undecided,
                                   est.gamma_hat, est.sample_variance, seen))
        batches.append(batch)
        new = _next(raw, seen, lam, const, config)
        if seen.any():
            change = float(np.max(np.abs(new[seen] - lam[seen]) / lam[seen]))
        else:
            change = 0.0
        log.info("iteration %d: hits=%d gamma=%.4g var=%.4g change=%.3g",
                 j, est.hits, est.gamma_hat, est.sample_variance, change)
        lam = new
        below = below + 1 if change < config.convergence_tol else 0
        if below >= config.convergence_window and converged_at is None:
            converged_at = j
            if config.stop_on_convergence:
                break
    return CEResult(lam, history, search, converged_at, batches)
