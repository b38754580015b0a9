"""Crude Monte Carlo and importance-sampling estimators."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import rng
from .formula import Formula
from .model import Model, as_params, mu
from .simulate import DEFAULT_MAX_STEPS, TraceBatch, simulate_batch

OVERFLOW_LOG = 700.0


@dataclass(frozen=True)
class EstimateResult:
    gamma_hat: float
    sample_variance: float
    n: int
    hits: int
    undecided: int
    relative_error_proxy: float

    def to_dict(self) -> dict:
        return asdict(self)


def _rel_err(gamma_hat, var, n):
    if gamma_hat <= 0:
        return math.inf
    return math.sqrt(var / n) / gamma_hat


def bernoulli_result(z: np.ndarray, undecided: int = 0) -> EstimateResult:
    n = len(z)
    hits = int(np.sum(z))
    g = hits / n
    var = g * (1.0 - g) * n / (n - 1) if n > 1 else 0.0
    return EstimateResult(g, var, n, hits, int(undecided), _rel_err(g, var, n))


def weighted_result(batch: TraceBatch) -> EstimateResult:
    """Mean and n-1 sample variance of the terms ``L_i z_i``."""
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    hit = batch.z.astype(bool)
    log_w = batch.log_l[hit]
    if log_w.size and log_w.max() > OVERFLOW_LOG:
        warnings.warn("likelihood ratios overflow double precision; "
                      "using extended precision", RuntimeWarning, stacklevel=2)
        terms = np.zeros(n, dtype=np.longdouble)
        terms[hit] = np.exp(log_w.astype(np.longdouble))
        mean = terms.sum() / n
        var = ((terms - mean) ** 2).sum() / (n - 1) if n > 1 else 0.0
        mean, var = float(mean), float(var)
    else:
        terms = np.zeros(n)
        terms[hit] = np.exp(log_w)
        mean = math.fsum(terms) / n
        var = math.fsum((terms - mean) ** 2) / (n - 1) if n > 1 else 0.0
    if mean > 1.0:
        warnings.warn(f"importance-sampling estimate {mean:.3g} exceeds 1; "
                      "the tilting parameters are pathological", RuntimeWarning, stacklevel=2)
    return EstimateResult(mean, var, n, int(hit.sum()), int(batch.undecided.sum()),
                          _rel_err(mean, var, n))


def mc_estimate(model: Model, prop: Formula, n: int, seed: int,
                max_steps: int = DEFAULT_MAX_STEPS, workers=None) -> EstimateResult:
    """Crude Monte Carlo under the untilted chain."""
    if n < 1:
        raise ValueError("n must be at least 1")
    batch = simulate_batch(model, mu(model), prop, n, seed, rng.MONTE_CARLO,
                           max_steps=max_steps, workers=workers)
    return bernoulli_result(batch.z, int(batch.undecided.sum()))


def is_estimate(model: Model, lam, prop: Formula, n: int, seed: int,
                max_steps: int = DEFAULT_MAX_STEPS, workers=None,
                extra: TraceBatch | None = None) -> EstimateResult:
    """Importance-sampling estimate from ``n`` fresh traces under ``lam``.

    ``extra`` traces (e.g. from converged optimisation iterations) are pooled
    with the fresh ones when given.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    lam = as_params(lam, model.n)
    batch = simulate_batch(model, lam, prop, n, seed, rng.ESTIMATE,
                           max_steps=max_steps, workers=workers)
    if extra is not None:
        batch = TraceBatch.concat([extra, batch])
    return weighted_result(batch)


def chernoff_sample_size(epsilon: float, delta: float) -> int:
    """Traces needed for absolute error ``epsilon`` with confidence ``1-delta``.

    Okamoto/Hoeffding bound for Bernoulli means: ``ceil(ln(2/delta) / (2 eps^2))``.
    """
    if not 0 < epsilon < 1 or not 0 < delta < 1:
        raise ValueError("epsilon and delta must lie in (0, 1)")
    return max(1, math.ceil(math.log(2.0 / delta) / (2.0 * epsilon * epsilon)))


def variance_reduction_report(reference, is_result: EstimateResult) -> float:
    """``gamma(1-gamma) / Var_IS``.

    ``reference`` is either an exact probability or an estimate whose
    ``gamma_hat`` is used; with an estimate the IS estimate itself is the
    best available proxy for gamma.
    """
    if is_result.gamma_hat <= 0:
        raise ValueError("importance-sampling estimate is zero")
    if isinstance(reference, EstimateResult):
        gamma = is_result.gamma_hat if reference.hits == 0 else reference.gamma_hat
    elif reference is None:
        gamma = is_result.gamma_hat
    else:
        gamma = float(reference)
    if is_result.sample_variance == 0:
        if is_result.hits < is_result.n:
            warnings.warn("zero sample variance with failed traces: the sampling "
                          "distribution is degenerate", RuntimeWarning, stacklevel=2)
        return math.inf
    return gamma * (1.0 - gamma) / is_result.sample_variance
