"""Zero-temperature message passing for community detection in the stochastic block model."""

from .cavity_general import ModelParams, delta_c1, delta_c2, flow, g, g_prime, solve_fixed_points
from .cavity_q2 import Q2Params, threshold_no_tiebreak, threshold_tiebreak

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "Q2Params", "delta_c1", "delta_c2", "flow", "g", "g_prime",
    "solve_fixed_points", "threshold_no_tiebreak", "threshold_tiebreak",
]
