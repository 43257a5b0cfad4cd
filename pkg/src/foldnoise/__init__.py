"""Airy analytics, noise corrections and Monte Carlo for the noisy dynamic saddle-node bifurcation."""

__version__ = "0.1.0"

from .airy import YSTAR, AiryQuartet, airy_array, airy_eval, airy_largest_ai_zero, scalar_functions
from .dv import DVResult, dv_closed_form, dv_integral, dv_limit, positivity_scan
from .errors import ConvergenceError, DivergenceError, DomainError
from .flow import (
    FlowPoint,
    TravelTimeDerivatives,
    rescale,
    riccati_from_initial,
    slow_solution,
    travel_time,
    travel_time_derivatives,
)
from .fpt import BoundaryCurve, linear_boundary, mc_integrated_bm, quadratic_boundary, slice_bridge_prediction, solve_b
from .sde import FlowConfig, run_monte_carlo, simulate_path, simulate_paths, sweep_statistics

__all__ = [
    "__version__",
    "YSTAR",
    "AiryQuartet",
    "airy_eval",
    "airy_array",
    "airy_largest_ai_zero",
    "scalar_functions",
    "DVResult",
    "dv_integral",
    "dv_closed_form",
    "dv_limit",
    "positivity_scan",
    "DomainError",
    "DivergenceError",
    "ConvergenceError",
    "FlowPoint",
    "TravelTimeDerivatives",
    "riccati_from_initial",
    "slow_solution",
    "travel_time",
    "travel_time_derivatives",
    "rescale",
    "BoundaryCurve",
    "linear_boundary",
    "quadratic_boundary",
    "solve_b",
    "mc_integrated_bm",
    "slice_bridge_prediction",
    "FlowConfig",
    "simulate_path",
    "simulate_paths",
    "run_monte_carlo",
    "sweep_statistics",
]
