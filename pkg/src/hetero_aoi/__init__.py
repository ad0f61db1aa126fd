"""Optimal age-of-information scheduling over a fast Gilbert-Elliot channel and a slow reliable channel."""
from .model import (Action, ChannelParams, InadmissibleAction, InvalidParameters,
                    MatrixPowers, Region, SystemState, classify_region,
                    classify_region_discounted, matrix_powers, transition)
from .policy import (ConstantPolicy, Direction, IntRange, RandomPolicy, TablePolicy,
                     ThresholdPolicy, always_ch1, always_ch2)
from .costs import ExponentialCost, LinearCost, parse_cost
from .exact import BracketError, SolveResult, solve, solve_iid

__version__ = "0.1.0"

__all__ = [
    "Action", "ChannelParams", "InadmissibleAction", "InvalidParameters", "MatrixPowers",
    "Region", "SystemState", "classify_region", "classify_region_discounted",
    "matrix_powers", "transition", "ConstantPolicy", "Direction", "IntRange",
    "RandomPolicy", "TablePolicy", "ThresholdPolicy", "always_ch1", "always_ch2",
    "ExponentialCost", "LinearCost", "parse_cost", "BracketError", "SolveResult",
    "solve", "solve_iid", "__version__",
]
