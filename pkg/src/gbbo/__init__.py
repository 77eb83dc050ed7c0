"""Generalized black-box optimization: library, service, and benchmarks."""

from .advisor import (
    AlgorithmPlan,
    History,
    Observation,
    impute_pending,
    select_algorithm,
    suggest,
    suggest_batch,
)
from .space import (
    Condition,
    Configuration,
    ParamKind,
    Parameter,
    SearchSpace,
    TaskSpec,
    parse_task,
)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmPlan",
    "Condition",
    "Configuration",
    "History",
    "Observation",
    "ParamKind",
    "Parameter",
    "SearchSpace",
    "TaskSpec",
    "impute_pending",
    "parse_task",
    "select_algorithm",
    "suggest",
    "suggest_batch",
    "__version__",
]
