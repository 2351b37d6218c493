"""Poisson, Skellam and modified-Bessel primitives.

Everything is evaluated in log-space with one exponentiation at the end,
because degrees of a few hundred put e^(-c) prefactors far below the
double-precision range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special, stats

DEFAULT_EPS_TAIL = 1e-12


@dataclass(frozen=True)
class PoissonSpec:
    mean: float

    def __post_init__(self):
        if not math.isfinite(self.mean) or self.mean < 0:
            raise ValueError(f"Poisson mean must be finite and >= 0, got {self.mean}")


@dataclass(frozen=True)
class SkellamSpec:
    """Difference of two independent Poissons, ``K = K1 - K2``."""

    mean_plus: float
    mean_minus: float

    def __post_init__(self):
        for m in (self.mean_plus, self.mean_minus):
            if not math.isfinite(m) or m < 0:
                raise ValueError(f"Skellam means must be finite and >= 0, got {m}")

    @property
    def x(self) -> float:
        """Bessel argument ``2 sqrt(mean_plus * mean_minus)``."""
        return 2.0 * math.sqrt(self.mean_plus * self.mean_minus)

    @property
    def y(self) -> float:
        """``artanh((l1 - l2) / (l1 + l2))``; infinite when one mean is zero."""
        s = self.mean_plus + self.mean_minus
        if s == 0:
            return 0.0
        return math.atanh((self.mean_plus - self.mean_minus) / s)


@dataclass(frozen=True)
class TailPolicy:
    eps_tail: float = DEFAULT_EPS_TAIL
    k_max_cap: int | None = None  # None -> 10 * (mean + 10)

    def __post_init__(self):
        if not (0 < self.eps_tail <= 1):
            raise ValueError("eps_tail must lie in (0, 1]")
        if self.k_max_cap is not None and self.k_max_cap < 1:
            raise ValueError("k_max_cap must be >= 1")

    def cap_for(self, mean: float) -> int:
        if self.k_max_cap is not None:
            return self.k_max_cap
        return int(math.ceil(10 * (mean + 10)))


def _mean(spec) -> float:
    mean = spec.mean if isinstance(spec, PoissonSpec) else float(spec)
    if not math.isfinite(mean) or mean < 0:
        raise ValueError(f"Poisson mean must be finite and >= 0, got {mean}")
    return mean


def poisson_logpmf(mean: float, k):
    """Log of the Poisson pmf, vectorised over ``k``; ``-inf`` off support."""
    k = np.asarray(k)
    if np.any(k < 0):
        raise ValueError("Poisson index must be non-negative")
    kf = k.astype(float)
    # xlogy gives 0*log(0) = 0, so mean = 0 is handled exactly
    return special.xlogy(kf, mean) - mean - special.gammaln(kf + 1.0)


def poisson_pmf(spec, k):
    """``exp(-mean) mean**k / k!`` for ``k >= 0`` (scalar or array ``k``)."""
    mean = _mean(spec)
    out = np.exp(poisson_logpmf(mean, k))
    return float(out) if np.ndim(out) == 0 else out


def poisson_cdf_below(spec, k):
    """Strict lower tail ``sum_{j<k} P(j)``; exactly 0 at ``k = 0``.

    This is the regularized upper incomplete gamma ``Q(k, mean)``.
    """
    mean = _mean(spec)
    k = np.asarray(k)
    if np.any(k < 0):
        raise ValueError("Poisson index must be non-negative")
    kf = np.maximum(k, 1).astype(float)
    out = np.where(k == 0, 0.0, special.gammaincc(kf, mean))
    return float(out) if np.ndim(out) == 0 else out


def poisson_sf(mean: float, k: int) -> float:
    """Upper tail ``P(X > k)``."""
    return float(stats.poisson.sf(k, mean))


def bessel_i_scaled(order: int, x: float) -> float:
    """``exp(-x) I_order(x)`` for ``x >= 0``."""
    if x < 0:
        raise ValueError("bessel_i_scaled requires x >= 0")
    if order < 0:
        raise ValueError("order must be non-negative")
    return float(special.ive(order, x))


def truncation_bound(spec, policy: TailPolicy | None = None) -> int:
    """Smallest ``K >= mean`` with ``P(X > K) < eps_tail``, capped.

    For a degenerate Poisson (mean 0) the bound is 0.
    """
    policy = policy or TailPolicy()
    return _truncation_bound(_mean(spec), policy.eps_tail, policy.cap_for(_mean(spec)))


@lru_cache(maxsize=4096)
def _truncation_bound(mean: float, eps_tail: float, cap: int) -> int:
    k = int(math.ceil(mean))
    if poisson_sf(mean, k) < eps_tail:
        return min(k, cap)
    # exponential search then bisection on the monotone tail
    step = max(1, int(math.ceil(math.sqrt(mean + 1))))
    hi = k + step
    while poisson_sf(mean, hi) >= eps_tail and hi < cap:
        step *= 2
        hi = k + step
    if hi >= cap:
        hi = cap
        if poisson_sf(mean, hi) >= eps_tail:
            return cap
    lo = k
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if poisson_sf(mean, mid) < eps_tail:
            hi = mid
        else:
            lo = mid
    return hi


def _skellam_convolution(l1: float, l2: float, k: int, policy: TailPolicy) -> float:
    # P(K1 - K2 = k) = sum_j P_l1(j + k) P_l2(j), j >= max(0, -k)
    j_lo = max(0, -k)
    j_hi = max(j_lo, truncation_bound(l2, policy), truncation_bound(l1, policy) - k)
    j = np.arange(j_lo, j_hi + 1)
    logs = poisson_logpmf(l1, j + k) + poisson_logpmf(l2, j)
    return float(np.exp(special.logsumexp(logs))) if np.isfinite(logs).any() else 0.0


def _skellam_bessel(l1: float, l2: float, k: int) -> float:
    x = 2.0 * math.sqrt(l1 * l2)
    ive = special.ive(abs(k), x)
    if ive == 0.0:
        return 0.0
    # e^{-(l1+l2)} I(x) = e^{-(sqrt(l1)-sqrt(l2))^2} ive(x)
    log_p = -(math.sqrt(l1) - math.sqrt(l2)) ** 2 + 0.5 * k * (math.log(l1) - math.log(l2))
    return math.exp(log_p + math.log(ive))


def skellam_pmf(spec: SkellamSpec, k: int, method: str = "convolution",
                policy: TailPolicy | None = None) -> float:
    """Probability that the difference of the two Poissons equals ``k``.

    ``method="convolution"`` sums the product of the two Poisson pmfs and is
    the default; ``method="bessel"`` uses the closed form with an
    exponentially scaled Bessel function. The Bessel form is singular when a
    mean is zero, so it falls back to the convolution there.
    """
    policy = policy or TailPolicy()
    l1, l2 = spec.mean_plus, spec.mean_minus
    k = int(k)
    if method == "bessel" and l1 > 0 and l2 > 0:
        return _skellam_bessel(l1, l2, k)
    if method not in ("bessel", "convolution"):
        raise ValueError(f"unknown method {method!r}")
    if l2 == 0:
        return poisson_pmf(l1, k) if k >= 0 else 0.0
    if l1 == 0:
        return poisson_pmf(l2, -k) if k <= 0 else 0.0
    return _skellam_convolution(l1, l2, k, policy)


def skellam_pmf_array(l1: float, l2: float, k_max: int) -> np.ndarray:
    """Skellam pmf on ``k = -k_max .. k_max`` by direct convolution."""
    j = np.arange(0, 2 * k_max + 1)
    p1 = np.exp(poisson_logpmf(l1, j))
    p2 = np.exp(poisson_logpmf(l2, j))
    full = np.convolve(p1, p2[::-1])  # index t <-> k = t - 2*k_max
    mid = 2 * k_max
    return full[mid - k_max: mid + k_max + 1]
