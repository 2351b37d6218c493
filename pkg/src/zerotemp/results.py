from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class FixedPoint:
    """A root of an order-parameter map together with solver metadata."""

    value: float
    stable: bool
    residual: float
    slope: float | None = None  # derivative of the map at the root
    iterations: int = 0
    q_tilde: float | None = None  # only set by the q=2 no-tiebreak solver


@dataclass
class PhaseThresholds:
    """Detectability thresholds at one ``(q, c)``.

    ``delta_c1`` is ``None`` when no accurate branch appears for admissible
    ``delta``. ``continuous`` marks a second-order transition, in which case
    ``delta_c1`` is the bracketed onset rather than a tangency point.
    """

    delta_c1: float | None
    delta_c2: float | None
    eta2: float | None = None
    continuous: bool = False
    meta: dict = field(default_factory=dict)


@dataclass
class Tangency:
    """Onset of the accurate branch: threshold ``delta`` and its accuracy."""

    delta: float
    eta2: float
    continuous: bool = False
    polished: bool = False
    meta: dict = field(default_factory=dict)


@dataclass
class RhoCritical:
    """Reveal fraction at which the low-accuracy branch disappears."""

    rho: float
    eta_below: float
    eta_above: float

    @property
    def jump(self) -> float:
        return self.eta_above - self.eta_below


@dataclass
class Trajectory:
    times: np.ndarray
    eta: np.ndarray
    converged: bool
    residual: float

    @property
    def final(self) -> float:
        return float(self.eta[-1])
