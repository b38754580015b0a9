"""Counter-based random numbers.

Every uniform draw is a pure function of ``(master_seed, stream, iteration,
trace_index, step)``, so results do not depend on how traces are split
between workers or batches. The mixing function is the SplitMix64
finaliser (Steele, Lea & Flood 2014):

    z = (x + 0x9E3779B97F4A7C15) mod 2^64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

Keys are chained as ``mix(mix(mix(mix(seed) ^ stream) ^ iteration) ^ index)``
and the uniform for a step is ``(mix(trace_key ^ mix(step)) >> 11) * 2^-53``.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1

# stream identifiers
CE = 0
INITIAL_SEARCH = 1
ESTIMATE = 2
MONTE_CARLO = 3
TRACE = 4


def mix(x) -> np.ndarray:
    """SplitMix64 finaliser, element-wise on uint64 (wraps modulo 2^64)."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix_int(x: int) -> int:
    """Scalar reference implementation with Python integers."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def trace_keys(master_seed: int, stream: int, iteration: int, indices) -> np.ndarray:
    """64-bit keys for the traces ``indices`` of one batch."""
    base = mix_int(mix_int(mix_int(master_seed & _MASK) ^ stream) ^ iteration)
    idx = np.asarray(indices, dtype=np.uint64)
    return mix(np.uint64(base) ^ idx)


def uniforms(keys: np.ndarray, step: int) -> np.ndarray:
    """One uniform in [0, 1) per key for the given step."""
    s = np.uint64(mix_int(step))
    bits = mix(keys ^ s) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / 9007199254740992.0)


def generator(master_seed: int, stream: int, iteration: int = 0) -> np.random.Generator:
    """A numpy generator for auxiliary draws (e.g. random restarts)."""
    base = mix_int(mix_int(mix_int(master_seed & _MASK) ^ stream) ^ iteration)
    return np.random.Generator(np.random.PCG64(base))
