"""Exact analysis of cyclic polling systems with smart customers.

Poisson arrival rates may depend on the server's position in the cycle.  The
package computes stability, mean waiting times (mean value analysis),
queue-length and waiting-time transforms, cycle-time distributions, the
pseudo-conservation law, and optimal routing strategies, and ships a
discrete-event simulator for cross-validation.
"""

__version__ = "0.1.0"

from .model import (
    EXHAUSTIVE,
    GATED,
    Distribution,
    PeriodId,
    PollingModel,
    S,
    StrategyProfile,
    V,
    make_model,
    periods,
    validate,
)
from .mva import MvaError, MvaSolution, mean_cycle_time, mean_visit_times, solve_mva
from .stability import StabilityReport, stability_report
from .transforms import ConvergenceError, Transform, busy_period_lst, transform_moment

__all__ = [
    "EXHAUSTIVE",
    "GATED",
    "Distribution",
    "PeriodId",
    "PollingModel",
    "S",
    "StrategyProfile",
    "V",
    "make_model",
    "periods",
    "validate",
    "MvaError",
    "MvaSolution",
    "mean_cycle_time",
    "mean_visit_times",
    "solve_mva",
    "StabilityReport",
    "stability_report",
    "ConvergenceError",
    "Transform",
    "busy_period_lst",
    "transform_moment",
    "__version__",
]
