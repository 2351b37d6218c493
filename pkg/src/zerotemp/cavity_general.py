"""Fixed-point analysis of tiebreaking zero-temperature inference for any q.

With tiebreaking every message is one-hot, so the message population is
described by one number: the density ``eta`` of messages that carry the
sender's true label. One update maps ``eta`` to ``g(eta)``, the probability
that a node's own label wins the argmax over the ``q`` Poisson vote counts
(ties broken at random).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .numerics import poisson_logpmf, truncation_bound
from .results import FixedPoint, RhoCritical, Tangency, Trajectory

BETA_MODES = ("normalized", "literal")

SCAN_STEP = 1e-3
ROOT_TOL = 1e-10
DELTA_TOL = 1e-6
ONSET_GAP = 1e-4
RANDOM_OFFSET = 1e-3


class NoThreshold(ValueError):
    """Raised when a threshold has no solution in the admissible range."""


@dataclass(frozen=True)
class ModelParams:
    q: int
    c: float
    delta: float = 0.0
    rho: float = 0.0
    beta: float = 1.0
    beta_mode: str = "normalized"

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 2:
            raise ValueError(f"q must be an integer >= 2, got {self.q}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not (0 <= self.delta <= self.c * (1 + 1e-12)):
            raise ValueError(f"need 0 <= delta <= c, got delta={self.delta}, c={self.c}")
        if not (0 <= self.rho <= 1):
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.beta < 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if self.beta_mode not in BETA_MODES:
            raise ValueError(f"beta_mode must be one of {BETA_MODES}")

    @property
    def gamma(self) -> float:
        """Mean number of neighbours in each other group."""
        return max((self.c - self.delta) / self.q, 0.0)

    @property
    def alpha(self) -> float:
        """Mean number of neighbours in the node's own group."""
        return (self.c + (self.q - 1) * self.delta) / self.q

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)


def lambdas_general(params: ModelParams, eta):
    """Poisson means of the vote counts for the own label and for each wrong label.

    Works elementwise on array ``eta``. With a reveal fraction ``rho`` a share
    of incoming messages is forced correct.
    """
    eta = np.asarray(eta, dtype=float)
    q, c, d, rho = params.q, params.c, params.delta, params.rho
    gam = params.gamma
    l1 = gam + d * eta
    l2 = ((c - gam) - d * eta) / (q - 1)
    if rho > 0:
        l1 = rho * params.alpha + (1 - rho) * l1
        l2 = rho * gam + (1 - rho) * l2
    l1 = np.maximum(l1, 0.0)
    l2 = np.maximum(l2, 0.0)
    if l1.ndim == 0:
        return float(l1), float(l2)
    return l1, l2


def _lambda_slopes(params: ModelParams) -> tuple[float, float]:
    s = (1 - params.rho) * params.delta
    return s, -s / (params.q - 1)


def tie_weights(q: int, beta: float = 1.0, mode: str = "normalized") -> np.ndarray:
    """Probability that the own label wins a tie against ``n`` wrong labels, n = 0..q-1."""
    n = np.arange(q, dtype=float)
    if mode == "normalized":
        return beta / (beta + n)
    if mode == "literal":
        return np.minimum(1.0, beta / (n + 1.0))
    raise ValueError(f"unknown beta mode {mode!r}")


def _k_max(params: ModelParams) -> int:
    # both vote means are <= c, so one bound serves every eta and keeps g smooth in eta
    return max(truncation_bound(params.c), 1)


def _poisson_table(lam: np.ndarray, k: np.ndarray) -> np.ndarray:
    return np.exp(poisson_logpmf_table(lam, k))


def poisson_logpmf_table(lam: np.ndarray, k: np.ndarray) -> np.ndarray:
    lam = lam[:, None]
    kf = k[None, :].astype(float)
    return special.xlogy(kf, lam) - lam - special.gammaln(kf + 1.0)


def _g_core(params: ModelParams, eta: np.ndarray, derivative: bool):
    q = params.q
    k = np.arange(_k_max(params) + 1)
    l1, l2 = lambdas_general(params, np.atleast_1d(eta))
    l1 = np.atleast_1d(l1)
    l2 = np.atleast_1d(l2)
    p1 = _poisson_table(l1, k)
    p2 = _poisson_table(l2, k)
    zeros = np.zeros((p2.shape[0], 1))
    q2 = np.concatenate([zeros, np.cumsum(p2, axis=1)[:, :-1]], axis=1)
    np.minimum(q2, 1.0, out=q2)
    w = tie_weights(q, params.beta, params.beta_mode)
    binom = special.comb(q - 1, np.arange(q))

    s = np.zeros_like(p2)
    ds = np.zeros_like(p2) if derivative else None
    if derivative:
        p2_prev = np.concatenate([zeros, p2[:, :-1]], axis=1)
        dp2 = p2_prev - p2
        dq2 = -p2_prev
    for n in range(q):
        m = q - 1 - n
        coef = w[n] * binom[n]
        s += coef * p2 ** n * q2 ** m
        if derivative:
            if n >= 1:
                ds += coef * n * p2 ** (n - 1) * dp2 * q2 ** m
            if m >= 1:
                ds += coef * m * p2 ** n * q2 ** (m - 1) * dq2
    g = np.sum(p1 * s, axis=1)
    if not derivative:
        return g, None
    dl1, dl2 = _lambda_slopes(params)
    p1_prev = np.concatenate([zeros, p1[:, :-1]], axis=1)
    gp = dl1 * np.sum((p1_prev - p1) * s, axis=1) + dl2 * np.sum(p1 * ds, axis=1)
    return g, gp


def _unwrap(x, like):
    return float(x[0]) if np.ndim(like) == 0 else x


def pbar(params: ModelParams, eta: float, k: int, n: int) -> float:
    """Probability that exactly ``n`` of the ``q-1`` wrong-label counts equal ``k``
    and the others are below ``k``."""
    if k < 0 or not (0 <= n <= params.q - 1):
        raise ValueError("need k >= 0 and 0 <= n <= q-1")
    _, l2 = lambdas_general(params, eta)
    p = math.exp(poisson_logpmf(l2, k))
    below = float(special.gammaincc(k, l2)) if k > 0 else 0.0
    m = params.q - 1 - n
    return math.comb(params.q - 1, n) * p ** n * below ** m


def g(params: ModelParams, eta):
    """Probability that an updated message is correct, given correct-message density ``eta``."""
    out, _ = _g_core(params, np.asarray(eta, dtype=float), derivative=False)
    return _unwrap(out, eta)


def g_prime(params: ModelParams, eta):
    """Analytic ``dg/deta``."""
    _, out = _g_core(params, np.asarray(eta, dtype=float), derivative=True)
    return _unwrap(out, eta)


def g_and_prime(params: ModelParams, eta):
    out, der = _g_core(params, np.asarray(eta, dtype=float), derivative=True)
    return _unwrap(out, eta), _unwrap(der, eta)


def _h(params, eta):
    return g(params, eta) - eta


def _dedupe(roots: list[float], tol: float = 1e-7) -> list[float]:
    out: list[float] = []
    for r in sorted(roots):
        if not out or r - out[-1] > tol:
            out.append(r)
    return out


def _root_candidates(params: ModelParams, scan_step: float) -> list[float]:
    lo = 1.0 / params.q
    n = int(math.ceil((1.0 - lo) / scan_step)) + 1
    grid = np.linspace(lo, 1.0, n)
    h = g(params, grid) - grid
    f = lambda x: _h(params, x)  # noqa: E731
    near = np.abs(h) < 1e-12
    roots: list[float] = []

    # runs of grid points that already satisfy the equation: keep the best of each run
    i = 0
    while i < n:
        if near[i]:
            j = i
            while j + 1 < n and near[j + 1]:
                j += 1
            best = i + int(np.argmin(np.abs(h[i:j + 1])))
            roots.append(float(grid[best]))
            i = j + 1
        else:
            i += 1

    for i in range(n - 1):
        if near[i] or near[i + 1]:
            continue
        if h[i] * h[i + 1] < 0:
            roots.append(optimize.brentq(f, grid[i], grid[i + 1], xtol=1e-14))

    # near-tangent touches that fall between grid points
    for i in range(1, n - 1):
        if near[i]:
            continue
        if h[i] < 0 and h[i] >= h[i - 1] and h[i] >= h[i + 1]:
            sign = 1.0
        elif h[i] > 0 and h[i] <= h[i - 1] and h[i] <= h[i + 1]:
            sign = -1.0
        else:
            continue
        res = optimize.minimize_scalar(lambda x: -sign * f(x), bounds=(grid[i - 1], grid[i + 1]),
                                       method="bounded", options={"xatol": 1e-12})
        ext = float(res.x)
        hv = f(ext)
        if sign * hv < -1e-13:
            continue
        if abs(hv) <= 1e-13:
            roots.append(ext)
            continue
        for a, b in ((grid[i - 1], ext), (ext, grid[i + 1])):
            if f(a) * hv < 0:
                roots.append(optimize.brentq(f, a, b, xtol=1e-14))
            elif f(b) * hv < 0:
                roots.append(optimize.brentq(f, a, b, xtol=1e-14))
    return _dedupe(roots)


def solve_fixed_points(params: ModelParams, scan_step: float = SCAN_STEP) -> list[FixedPoint]:
    """All roots of ``g(eta) = eta`` on ``[1/q, 1]``, ascending, each tagged stable iff ``g' < 1``."""
    out = []
    for r in _root_candidates(params, scan_step):
        gv, gp = g_and_prime(params, r)
        out.append(FixedPoint(value=r, stable=gp < 1.0, residual=abs(gv - r), slope=gp))
    return out


def _require_unsupervised(params: ModelParams, what: str):
    if params.rho != 0 or params.beta != 1:
        raise ValueError(f"{what} needs rho = 0 and beta = 1 (the paramagnetic point must exist)")


def paramagnetic_slope(params: ModelParams) -> float:
    """``g'(1/q)``."""
    return g_prime(params, 1.0 / params.q)


def delta_c2(params: ModelParams, n_scan: int = 200) -> float:
    """``delta`` at which the paramagnetic point loses stability, ``g'(1/q) = 1``."""
    _require_unsupervised(params, "delta_c2")
    f = lambda d: paramagnetic_slope(params.replace(delta=d)) - 1.0  # noqa: E731
    deltas = np.linspace(0.0, params.c, n_scan + 1)[1:]
    vals = np.array([f(d) for d in deltas])
    above = np.nonzero(vals >= 0)[0]
    if above.size == 0:
        raise NoThreshold(f"paramagnetic point stable for all admissible delta (q={params.q}, c={params.c})")
    i = int(above[0])
    if i > 0 and np.any(np.diff(vals[: i + 1]) <= 0):
        raise NoThreshold("g'(1/q) is not increasing in delta on the bracket")
    lo = deltas[i - 1] if i > 0 else 0.0
    if vals[i] == 0:
        return float(deltas[i])
    root = optimize.brentq(f, lo, deltas[i], xtol=1e-13, rtol=4 * np.finfo(float).eps)
    if abs(f(root)) > 1e-8:
        raise NoThreshold(f"delta_c2 residual too large: {f(root):.3g}")
    return float(root)


def _accurate_roots(params: ModelParams) -> list[float]:
    cut = 1.0 / params.q + ONSET_GAP
    return [r for r in _root_candidates(params, SCAN_STEP) if r > cut]


def _tangency_system(params: ModelParams):
    def fun(z):
        eta, d = z
        gv, gp = g_and_prime(params.replace(delta=d), eta)
        return [gv - eta, gp - 1.0]
    return fun


def delta_c1(params: ModelParams) -> Tangency | None:
    """Smallest ``delta`` with an accurate fixed point ``eta2 > 1/q``.

    Bisection on ``delta`` with root existence as the predicate, then a 2-D
    Newton polish of the tangency conditions ``g(eta) = eta``, ``g'(eta) = 1``.
    Returns ``None`` when no accurate branch exists up to ``delta = c``. When
    the branch grows continuously out of ``1/q`` the bisection onset is
    returned with ``continuous=True``.
    """
    _require_unsupervised(params, "delta_c1")
    at = lambda d: params.replace(delta=d)  # noqa: E731
    lo, hi = 0.0, params.c
    if not _accurate_roots(at(hi)):
        return None
    while hi - lo > DELTA_TOL:
        mid = 0.5 * (lo + hi)
        if _accurate_roots(at(mid)):
            hi = mid
        else:
            lo = mid
    roots = _accurate_roots(at(hi))
    eta_b = roots[0]
    meta = {"bracket": (lo, hi)}

    try:
        d2 = delta_c2(params)
    except NoThreshold:
        d2 = None
    # a branch that grows out of 1/q at delta_c2 marks a continuous transition
    continuous = d2 is not None and eta_b - 1.0 / params.q < 0.01 and abs(hi - d2) < 1e-3
    meta["delta_c2"] = d2

    guess_eta = 0.5 * (roots[0] + roots[1]) if len(roots) > 1 else roots[0]
    sol = optimize.root(_tangency_system(params), x0=[guess_eta, hi], method="hybr",
                        options={"xtol": 1e-13})
    eta_t, d_t = (float(v) for v in sol.x)
    floor = 1.0 / params.q - (1e-3 if continuous else -ONSET_GAP)
    ok = (sol.success and abs(d_t - hi) < 1e-3 and eta_t > floor
          and max(abs(v) for v in sol.fun) < 1e-9)
    meta["newton_success"] = bool(sol.success)
    if ok:
        meta["residual"] = float(max(abs(v) for v in sol.fun))
        eta_t = max(eta_t, 1.0 / params.q)
        return Tangency(delta=d_t, eta2=eta_t, continuous=continuous, polished=True, meta=meta)
    return Tangency(delta=hi, eta2=guess_eta, continuous=continuous, meta=meta)


def flow(params: ModelParams, eta0: float, t_max: float = 1e4, dt: float = 0.1,
         max_steps: int = 100_000, tol: float = 1e-13) -> Trajectory:
    """Euler integration of ``d eta/dt = g(eta) - eta``, stopped once stationary."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = min(int(math.ceil(t_max / dt)), max_steps)
    etas = [float(eta0)]
    eta = float(eta0)
    drift = _h(params, eta)
    for _ in range(steps):
        if abs(drift) < tol:
            break
        eta = min(max(eta + dt * drift, 0.0), 1.0)
        etas.append(eta)
        drift = _h(params, eta)
    residual = abs(drift)
    converged = residual < tol
    eta_arr = np.asarray(etas)
    return Trajectory(times=dt * np.arange(eta_arr.size), eta=eta_arr, converged=converged,
                      residual=residual)


def random_start(params: ModelParams) -> float:
    """Initial accuracy of random messages.

    Without side information ``1/q`` is itself a fixed point, so the start is
    nudged by ``RANDOM_OFFSET`` to let an unstable paramagnet decay.
    """
    if params.rho == 0 and params.beta == 1:
        return 1.0 / params.q + RANDOM_OFFSET
    return 1.0 / params.q


def selected_accuracy(params: ModelParams, accurate: bool = False) -> float:
    """Flow limit from random messages or, with ``accurate``, from ``eta = 1``."""
    start = 1.0 if accurate else random_start(params)
    return flow(params, start).final


def _lowest_root(params: ModelParams) -> tuple[float, int]:
    roots = _root_candidates(params, SCAN_STEP)
    return roots[0], len(roots)


def rho_critical(params: ModelParams, rho_grid=None, min_jump: float = 1e-3) -> RhoCritical | None:
    """Reveal fraction at which the low-accuracy branch reached from ``1/q`` vanishes.

    Scans ``rho``, looks for the last point with a bistable root set followed by
    a single root, and bisects between them. ``None`` when the selected
    accuracy is continuous in ``rho``.
    """
    if params.beta != 1:
        raise ValueError("rho_critical needs beta = 1")
    if rho_grid is None:
        rho_grid = np.concatenate([[0.0], np.geomspace(1e-4, 1.0, 160)])
    at = lambda r: params.replace(rho=float(r))  # noqa: E731
    info = [_lowest_root(at(r)) for r in rho_grid]
    for i in range(len(rho_grid) - 1):
        (e0, n0), (e1, n1) = info[i], info[i + 1]
        if n0 >= 2 and n1 == 1 and e1 - e0 > min_jump:
            lo, hi = float(rho_grid[i]), float(rho_grid[i + 1])
            eta_lo = e0
            while hi - lo > 1e-9 * max(1.0, hi):
                mid = 0.5 * (lo + hi)
                em, nm = _lowest_root(at(mid))
                if nm >= 2 and em < eta_lo + 0.5 * (e1 - eta_lo):
                    lo, eta_lo = mid, em
                else:
                    hi = mid
            eta_hi = _lowest_root(at(hi))[0]
            if eta_hi - eta_lo > min_jump:
                return RhoCritical(rho=0.5 * (lo + hi), eta_below=eta_lo, eta_above=eta_hi)
    return None
