"""Continuous-approximation design of feeder bus networks with heterogeneous
line spacing, stop spacing and headways."""
from .costmodel import Coordination, CostBreakdown, DesignGrid, generalized_cost
from .demand import UNIFORM, TruncNormalDemand, aggregates
from .params import ModelParams, agency_rates
from .solver import optimize_vehicle_size, solve_design

__all__ = [
    "Coordination", "CostBreakdown", "DesignGrid", "ModelParams", "TruncNormalDemand", "UNIFORM",
    "agency_rates", "aggregates", "generalized_cost", "optimize_vehicle_size", "solve_design",
]
__version__ = "0.1.0"
