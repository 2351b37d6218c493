"""Counter-based random numbers for the numba kernels.

splitmix64 is used both as a sequential generator (state passed in a
one-element array) and as a keyed hash, so a draw can be tied to a
``(seed, sweep, index)`` triple independent of evaluation order.
"""

import numpy as np
from numba import njit

from .numerics import poisson_pmf, truncation_bound

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def next_uniform(state):
    """Uniform on [0, 1); advances ``state[0]``."""
    state[0] += _GOLDEN
    return float(mix64(state[0]) >> _S11) * _INV53


@njit(inline="always")
def keyed_uniform(seed, a, b):
    """Uniform on [0, 1) determined only by ``(seed, a, b)``."""
    z = mix64(np.uint64(seed) + _GOLDEN * np.uint64(a + 1))
    z = mix64(z + _GOLDEN * np.uint64(b + 1))
    return float(z >> _S11) * _INV53


@njit(inline="always")
def sample_cdf(cdf, u):
    """Inverse-CDF draw from a tabulated cumulative distribution."""
    lo = 0
    hi = cdf.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


def poisson_cdf_table(mean: float) -> np.ndarray:
    """Cumulative Poisson table up to the default truncation bound; last entry forced to 1."""
    k = np.arange(truncation_bound(mean) + 1)
    cdf = np.cumsum(poisson_pmf(mean, k))
    cdf = np.atleast_1d(cdf).astype(float)
    cdf[-1] = 1.0
    return cdf


def seed_state(*key: int) -> np.ndarray:
    return np.array([np.random.SeedSequence(list(key)).generate_state(1, dtype=np.uint64)[0]],
                    dtype=np.uint64)
