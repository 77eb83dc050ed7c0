from .metrics import gap_series, hv_difference, hv_series, optimality_gap
from .problems import REGISTRY, Problem, get_problem, list_problems
from .runner import RunResult, load_results, run_experiment, run_single, summarize

__all__ = [
    "Problem",
    "REGISTRY",
    "RunResult",
    "gap_series",
    "get_problem",
    "hv_difference",
    "hv_series",
    "list_problems",
    "load_results",
    "optimality_gap",
    "run_experiment",
    "run_single",
    "summarize",
]
