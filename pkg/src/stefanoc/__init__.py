"""Discrete optimal control of a one-phase inverse Stefan problem.

Method-of-lines state solver with piecewise-linear finite elements, discrete
cost functional, projected-gradient minimisation and convergence diagnostics.
"""

from .control import (AnalyticControl, DiscreteControl, LiftControl, check_admissible,
                      continuous_norms, default_control, lift_Pn, norm_w21, norm_w22, sample_Qn)
from .cost import CostBreakdown, Measurements, continuous_cost_estimate, discrete_cost
from .expr import FunctionSpec, parse_expression
from .optimize import OptOptions, OptResult, minimize
from .problem import ProblemData, validate_data
from .state import DiscreteStateVector, solve_state

__version__ = "0.1.0"

__all__ = [
    "AnalyticControl",
    "CostBreakdown",
    "DiscreteControl",
    "DiscreteStateVector",
    "FunctionSpec",
    "LiftControl",
    "Measurements",
    "OptOptions",
    "OptResult",
    "ProblemData",
    "check_admissible",
    "continuous_cost_estimate",
    "continuous_norms",
    "default_control",
    "discrete_cost",
    "lift_Pn",
    "minimize",
    "norm_w21",
    "norm_w22",
    "parse_expression",
    "sample_Qn",
    "solve_state",
    "validate_data",
]
