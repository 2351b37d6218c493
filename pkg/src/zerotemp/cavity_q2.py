"""Closed-form analysis of zero-temperature inference with two groups.

Without tiebreaking the state is the pair (magnetization ``m``,
Edwards-Anderson parameter ``q_tilde``); with tiebreaking ``q_tilde`` is
pinned to 1 and only ``m`` remains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .numerics import skellam_pmf_array, truncation_bound
from .results import FixedPoint

SERIES_TOL = 1e-15


class NoDetectablePhase(ValueError):
    """Raised when a threshold does not exist at the requested degree."""


@dataclass(frozen=True)
class Q2Params:
    c: float
    delta: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not (0 <= self.delta <= self.c):
            raise ValueError(f"need 0 <= delta <= c, got delta={self.delta}, c={self.c}")

    @property
    def alpha(self) -> float:
        return 0.5 * (self.c + self.delta)

    @property
    def gamma(self) -> float:
        return 0.5 * (self.c - self.delta)


@dataclass(frozen=True)
class Q2State:
    m: float
    q_tilde: float

    def __post_init__(self):
        if not (abs(self.m) <= self.q_tilde + 1e-12 and self.q_tilde <= 1 + 1e-12):
            raise ValueError(f"need |m| <= q_tilde <= 1, got m={self.m}, q_tilde={self.q_tilde}")

    @property
    def eta_plus(self) -> float:
        return 0.5 * (self.q_tilde + self.m)

    @property
    def eta_minus(self) -> float:
        return 0.5 * (self.q_tilde - self.m)

    @property
    def eta_zero(self) -> float:
        return 1.0 - self.q_tilde


def lambdas_q2(params: Q2Params, state: Q2State) -> tuple[float, float]:
    """Poisson means of the votes for and against the correct label."""
    l1 = 0.5 * (params.c * state.q_tilde + params.delta * state.m)
    l2 = 0.5 * (params.c * state.q_tilde - params.delta * state.m)
    return max(l1, 0.0), max(l2, 0.0)


def _kmax(l1: float, l2: float) -> int:
    return max(truncation_bound(l1), truncation_bound(l2), 1)


def _vote_margin_moments(l1: float, l2: float) -> tuple[float, float]:
    """``(P(K=0), P(K>0) - P(K<0))`` for the Skellam vote margin."""
    k_max = _kmax(l1, l2)
    p = skellam_pmf_array(l1, l2, k_max)
    return float(p[k_max]), float(p[k_max + 1:].sum() - p[:k_max].sum())


def _sinh_series(scale_log: float, x: float, y: float, k_stop: int) -> float:
    """``2 exp(scale_log) sum_{k>=1} I_k(x) sinh(k y)`` with scaled Bessels."""
    total = 0.0
    for k in range(1, k_stop + 1):
        ive = special.ive(k, x)
        if ive == 0.0:
            break
        base = scale_log + x + math.log(ive)
        term = math.exp(base + k * y) - math.exp(base - k * y)
        total += term
        if abs(term) < SERIES_TOL and k > x:
            break
    return total


def rhs_no_tiebreak(params: Q2Params, state: Q2State, method: str = "skellam") -> Q2State:
    """One application of the no-tiebreak fixed-point map.

    ``method="skellam"`` sums the vote-margin distribution directly;
    ``method="bessel"`` evaluates the Bessel-series form.
    """
    if state.q_tilde == 0:
        return Q2State(0.0, 0.0)
    l1, l2 = lambdas_q2(params, state)
    if method == "skellam" or l1 == 0 or l2 == 0:
        p0, m_new = _vote_margin_moments(l1, l2)
        return Q2State(m_new, 1.0 - p0)
    if method != "bessel":
        raise ValueError(f"unknown method {method!r}")
    x = 2.0 * math.sqrt(l1 * l2)
    y = math.atanh((l1 - l2) / (l1 + l2))
    cq = params.c * state.q_tilde
    p0 = math.exp(-cq + x) * special.ive(0, x)
    m_new = _sinh_series(-cq, x, y, _kmax(l1, l2))
    return Q2State(m_new, 1.0 - p0)


def rhs_tiebreak_m(params: Q2Params, m: float, method: str = "skellam") -> float:
    """Magnetization after one update when ties are broken by a coin flip."""
    if abs(m) > 1 + 1e-12:
        raise ValueError("|m| must be <= 1")
    l1 = max(0.5 * (params.c + params.delta * m), 0.0)
    l2 = max(0.5 * (params.c - params.delta * m), 0.0)
    if method == "skellam" or l1 == 0 or l2 == 0:
        return _vote_margin_moments(l1, l2)[1]
    if method != "bessel":
        raise ValueError(f"unknown method {method!r}")
    x = math.sqrt(max(params.c ** 2 - (params.delta * m) ** 2, 0.0))
    y = math.atanh(params.delta * m / params.c)
    return _sinh_series(-params.c, x, y, _kmax(l1, l2))


def _q_tilde_residual(q: float, c: float) -> float:
    # 1 - q - e^{-cq} I_0(cq)
    return 1.0 - q - special.ive(0, c * q)


def solve_q_tilde(c: float, scan_step: float = 1e-3) -> float:
    """Largest root in [0, 1] of ``1 - q = exp(-c q) I_0(c q)``.

    Returns 0 when only the trivial root exists (``c <= 1``).
    """
    if not c > 0:
        raise ValueError("c must be positive")
    grid = np.arange(1e-6, 1.0 + scan_step / 2, scan_step)
    grid[-1] = 1.0
    vals = 1.0 - grid - special.ive(0, c * grid)
    pos = np.nonzero(vals > 0)[0]
    if pos.size == 0:
        return 0.0
    i = pos[-1]
    if i == grid.size - 1:
        return 1.0
    root = optimize.brentq(_q_tilde_residual, grid[i], grid[i + 1], args=(c,), xtol=1e-15,
                           rtol=4 * np.finfo(float).eps)
    return float(root)


def threshold_no_tiebreak(c: float) -> float:
    """Detection threshold in ``delta`` without tiebreaking."""
    q = solve_q_tilde(c)
    if q == 0.0:
        raise NoDetectablePhase(f"no detectable phase at c={c} (q_tilde = 0)")
    z = c * q
    return float(1.0 / (special.ive(0, z) + special.ive(1, z)))


def threshold_tiebreak(c: float) -> float:
    """Detection threshold in ``delta`` with random tiebreaking."""
    if not c > 0:
        raise ValueError("c must be positive")
    return float(1.0 / (special.ive(0, c) + special.ive(1, c)))


def tiebreak_slope_at_zero(params: Q2Params) -> float:
    """Linearization ``d m'/d m`` at ``m = 0`` of the tiebreak map."""
    return params.delta * float(special.ive(0, params.c) + special.ive(1, params.c))


def _refine_root(f, m_guess: float, width: float = 1e-2) -> float | None:
    lo, hi = max(m_guess - width, 1e-12), min(m_guess + width, 1.0)
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        return None
    return optimize.brentq(f, lo, hi, xtol=1e-14)


def solve_m_tiebreak(params: Q2Params, m0: float = 0.01, damping: float = 0.5,
                     tol: float = 1e-12, max_iter: int = 100_000) -> FixedPoint:
    """Damped iteration of the tiebreak map from ``m0``, then bisection polish."""
    m = m0
    it = 0
    for it in range(1, max_iter + 1):
        m_new = (1 - damping) * m + damping * rhs_tiebreak_m(params, m)
        if abs(m_new - m) < tol:
            m = m_new
            break
        m = m_new
    f = lambda mm: rhs_tiebreak_m(params, mm) - mm  # noqa: E731
    if abs(m) > 1e-6:
        polished = _refine_root(f, abs(m))
        if polished is not None:
            m = math.copysign(polished, m)
    h = 1e-6
    if abs(m) < 1e-6:
        slope = tiebreak_slope_at_zero(params)
    else:
        slope = (rhs_tiebreak_m(params, min(m + h, 1.0)) - rhs_tiebreak_m(params, m - h)) / (
            min(m + h, 1.0) - (m - h))
    return FixedPoint(value=m, stable=slope < 1, residual=abs(f(m)), slope=slope, iterations=it)


def solve_no_tiebreak(params: Q2Params, m0: float = 0.5, q0: float = 1.0, damping: float = 0.5,
                      tol: float = 1e-12, max_iter: int = 100_000) -> FixedPoint:
    """Damped iteration of the two-parameter no-tiebreak map."""
    state = Q2State(m0, q0)
    it = 0
    for it in range(1, max_iter + 1):
        img = rhs_no_tiebreak(params, state)
        m = (1 - damping) * state.m + damping * img.m
        q = (1 - damping) * state.q_tilde + damping * img.q_tilde
        done = abs(m - state.m) < tol and abs(q - state.q_tilde) < tol
        state = Q2State(m, q)
        if done:
            break
    img = rhs_no_tiebreak(params, state)
    residual = max(abs(img.m - state.m), abs(img.q_tilde - state.q_tilde))
    return FixedPoint(value=state.m, stable=residual < 1e-8, residual=residual, iterations=it,
                      q_tilde=state.q_tilde)


def label_drift_multiplier(params: Q2Params, eta: float) -> float:
    """Growth factor of a perturbation that favours one label in both groups.

    Raising the accuracy of one group and lowering the other's by the same
    amount shifts the vote means by ``c`` instead of ``delta``, so the factor
    is ``(c / delta) * dm'/dm``. Above 1 the symmetric state drifts toward
    all nodes sharing one label, which the one-parameter analysis cannot see.
    """
    m = 2.0 * eta - 1.0
    h = 1e-6
    lo, hi = max(m - h, -1.0), min(m + h, 1.0)
    slope = (rhs_tiebreak_m(params, hi) - rhs_tiebreak_m(params, lo)) / (hi - lo)
    return params.c / params.delta * slope
