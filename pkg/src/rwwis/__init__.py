"""Random walks with internal states on Z^d.

Exact renewal computation of the new-site probability and expected range,
local limit predictors, and Monte Carlo range statistics.
"""

from __future__ import annotations

from .errors import (AssumptionError, BudgetError, ConvergenceError, DimensionError,
                     InvariantError, RWwISError, WalkFormatError)
from .model import (MomentSet, ValidationReport, WalkSpec, builtin_walk, load_walk,
                    moment_set, parse_walk, reversed_walk, stationary_measure, validate_walk)

__version__ = "0.1.0"

__all__ = [
    "AssumptionError", "BudgetError", "ConvergenceError", "DimensionError",
    "InvariantError", "RWwISError", "WalkFormatError",
    "MomentSet", "ValidationReport", "WalkSpec", "builtin_walk", "load_walk",
    "moment_set", "parse_walk", "reversed_walk", "stationary_measure", "validate_walk",
]
