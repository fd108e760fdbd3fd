"""Carbon-aware day-ahead planning and real-time job placement for data center fleets."""

from carbonsched.core import (
    FlexClass,
    ProblemConfig,
    Violation,
    aggregate_load,
    excess,
    feasible_cells,
    flatten_index,
    plan_cost,
    unflatten_index,
    validate_strategy,
)
from carbonsched.planner import (
    InfeasibleError,
    Plan,
    plan_day_ahead,
    plan_perfect_forecast,
    plan_saa,
    verify_certificate,
)
from carbonsched.risk import (
    DiscreteDistribution,
    SupportSet,
    build_support_set,
    calibrate_radius,
    empirical_cvar,
    wasserstein_discrete,
)

__version__ = "0.1.0"

__all__ = [
    "DiscreteDistribution",
    "FlexClass",
    "InfeasibleError",
    "Plan",
    "ProblemConfig",
    "SupportSet",
    "Violation",
    "aggregate_load",
    "build_support_set",
    "calibrate_radius",
    "empirical_cvar",
    "excess",
    "feasible_cells",
    "flatten_index",
    "plan_cost",
    "plan_day_ahead",
    "plan_perfect_forecast",
    "plan_saa",
    "unflatten_index",
    "validate_strategy",
    "verify_certificate",
    "wasserstein_discrete",
]
