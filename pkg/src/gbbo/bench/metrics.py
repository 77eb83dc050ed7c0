"""Run metrics: optimality gap and hypervolume difference."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..acquisition import ParetoFront, hypervolume

__all__ = [
    "optimality_gap",
    "hv_difference",
    "gap_series",
    "hv_series",
    "ideal_hypervolume",
]


def optimality_gap(best_found: float, f_star: float) -> float:
    """|f(best found) - f(optimum)|."""
    return abs(best_found - f_star)


def ideal_hypervolume(ideal_points: np.ndarray, ref: Sequence[float]) -> float:
    return hypervolume(ParetoFront.from_points(ideal_points, ref))


def hv_difference(
    front_points: Sequence[Sequence[float]],
    ideal_points: np.ndarray,
    ref: Sequence[float],
) -> float:
    """HV(ideal front) - HV(estimated front), >= 0 when the ideal dominates."""
    ideal = ideal_hypervolume(np.asarray(ideal_points), ref)
    estimated = hypervolume(ParetoFront.from_points(front_points, ref))
    return ideal - estimated


def gap_series(
    objectives: Sequence[float],
    feasible: Sequence[bool],
    f_star: float | None,
) -> list[float]:
    """Best-so-far gap (or raw best value when the optimum is unknown).

    Infeasible prefixes yield +inf; the series is non-increasing afterwards.
    """
    best = math.inf
    out = []
    for y, ok in zip(objectives, feasible):
        if ok:
            best = min(best, y)
        if f_star is None or not math.isfinite(best):
            out.append(best)
        else:
            out.append(optimality_gap(best, f_star))
    return out


def hv_series(
    objective_rows: Sequence[Sequence[float]],
    feasible: Sequence[bool],
    ref: Sequence[float],
) -> list[float]:
    """Dominated hypervolume of the feasible front after each trial."""
    out = []
    pts: list[Sequence[float]] = []
    for row, ok in zip(objective_rows, feasible):
        if ok:
            pts.append(row)
        front = ParetoFront.from_points(pts, ref)
        out.append(hypervolume(front))
    return out
