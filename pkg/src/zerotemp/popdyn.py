"""Annealed population dynamics for tiebreaking zero-temperature message passing.

A pool of messages, each flagged correct or incorrect, is rebuilt every sweep.
Each new message comes from a node whose neighbourhood is redrawn from the
block model: Poisson(alpha) neighbours in its own group and Poisson(gamma) in
each other group, whose messages are sampled from the old pool. The receiving
node's own label is taken to be 0 throughout; only relative labels matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._rng import next_uniform, poisson_cdf_table, sample_cdf, seed_state
from .cavity_general import ModelParams

MIN_POOL = 1000


@dataclass
class MessagePool:
    correct: np.ndarray  # bool, one flag per message
    rng_seed: int = 0

    def __post_init__(self):
        self.correct = np.asarray(self.correct, dtype=bool)
        if self.correct.size < MIN_POOL:
            raise ValueError(f"pool needs at least {MIN_POOL} messages")

    @property
    def size(self) -> int:
        return int(self.correct.size)

    @property
    def eta(self) -> float:
        return float(np.count_nonzero(self.correct)) / self.size

    @classmethod
    def initial(cls, size: int, eta: float, seed: int = 0) -> "MessagePool":
        n_correct = min(size, int(math.ceil(eta * size)))
        flags = np.zeros(size, dtype=bool)
        flags[:n_correct] = True
        return cls(flags, seed)


@dataclass
class PopDynConfig:
    sweeps: int = 200
    burn_in: int = 100
    seed: int = 0
    pool_size: int = 100_000

    def __post_init__(self):
        if not 0 <= self.burn_in < self.sweeps:
            raise ValueError("need 0 <= burn_in < sweeps")


@dataclass
class PopDynResult:
    eta: np.ndarray  # per sweep, eta[0] is the initial pool
    burn_in: int
    mean: float
    stderr: float
    meta: dict = field(default_factory=dict)


@njit(cache=True)
def _step_kernel(pool, q, cdf_own, cdf_other, rho, beta, literal, state):
    size = pool.size
    out = np.empty(size, dtype=np.bool_)
    counts = np.zeros(q, dtype=np.int64)
    for r in range(size):
        counts[:] = 0
        # own-group neighbours, then the other groups pooled: by Poisson thinning a
        # uniform sender group per neighbour is the same as one draw per group
        n_own = sample_cdf(cdf_own, next_uniform(state))
        n_other = sample_cdf(cdf_other, next_uniform(state))
        for t in range(n_own + n_other):
            grp = 0 if t < n_own else 1 + int(next_uniform(state) * (q - 1))
            ok = pool[int(next_uniform(state) * size)]
            if rho > 0.0 and not ok:
                ok = next_uniform(state) < rho
            if ok:
                counts[grp] += 1
            else:
                # incorrect: a uniformly chosen label other than the sender's
                counts[(grp + 1 + int(next_uniform(state) * (q - 1))) % q] += 1
        best = counts.max()
        n_wrong = 0
        for lab in range(1, q):
            if counts[lab] == best:
                n_wrong += 1
        if counts[0] != best:
            out[r] = False
        elif n_wrong == 0:
            out[r] = True
        elif literal:
            out[r] = next_uniform(state) < min(1.0, beta / (n_wrong + 1.0))
        else:
            out[r] = next_uniform(state) < beta / (beta + n_wrong)
    return out


def popdyn_step(pool: MessagePool, params: ModelParams, sweep: int = 0) -> MessagePool:
    """Build a new pool of the same size from the old one.

    Every replacement draws Poisson neighbour counts, samples their messages
    from the old pool (forcing each correct with probability ``rho``), votes,
    and breaks ties at random with weight ``beta`` on the node's own label.
    The random stream is keyed by ``(pool.rng_seed, sweep)``.
    """
    flags = _step_kernel(pool.correct, params.q, poisson_cdf_table(params.alpha),
                         poisson_cdf_table((params.q - 1) * params.gamma), params.rho,
                         params.beta, params.beta_mode == "literal",
                         seed_state(pool.rng_seed, sweep))
    return MessagePool(flags, pool.rng_seed)


def _stderr(x: np.ndarray) -> float:
    """Standard error of the mean of a correlated series by batch means."""
    n = x.size
    if n < 2:
        return float("nan")
    n_batches = min(10, n // 2)
    size = n // n_batches
    batches = x[: n_batches * size].reshape(n_batches, size).mean(axis=1)
    return float(batches.std(ddof=1) / math.sqrt(n_batches))


def popdyn_run(config: PopDynConfig, params: ModelParams, init_eta: float) -> PopDynResult:
    """Iterate the pool for ``config.sweeps`` sweeps starting from accuracy ``init_eta``."""
    if not (1.0 / params.q - 1e-12 <= init_eta <= 1.0):
        raise ValueError("init_eta must lie in [1/q, 1]")
    pool = MessagePool.initial(config.pool_size, init_eta, config.seed)
    etas = [pool.eta]
    for sweep in range(config.sweeps):
        pool = popdyn_step(pool, params, sweep)
        etas.append(pool.eta)
    eta = np.asarray(etas)
    tail = eta[config.burn_in + 1:]
    return PopDynResult(eta=eta, burn_in=config.burn_in, mean=float(tail.mean()),
                        stderr=_stderr(tail),
                        meta={"pool_size": config.pool_size, "seed": config.seed,
                              "sweeps": config.sweeps})
