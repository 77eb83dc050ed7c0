"""Acquisition functions, hypervolume computation and acquisition optimizers.

Everything here uses the minimization convention: smaller objective values
are better and a constraint c(x) <= 0 is feasible.  Acquisition values are
maximized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .space import (
    Configuration,
    ParamKind,
    SearchSpace,
    from_unit_vector,
    sample_random,
    to_unit_vector,
    validate_config,
)
from .surrogate import GaussianPrediction

__all__ = [
    "ParetoFront",
    "ei",
    "pi",
    "ucb",
    "pof",
    "constrained_acq",
    "hypervolume",
    "ehvi",
    "ehvi_mc",
    "ehvi2d_vec",
    "optimize_acq",
]

DEFAULT_UCB_BETA = 2.0


# ---------------------------------------------------------------------------
# Scalar acquisition scores
# ---------------------------------------------------------------------------


def ei(pred: GaussianPrediction, eta: float) -> float:
    """Expected improvement below the incumbent eta; 0 for a collapsed posterior."""
    return float(ei_vec(np.array([pred.mean]), np.array([pred.std]), eta)[0])


def ei_vec(mean: np.ndarray, std: np.ndarray, eta: float) -> np.ndarray:
    imp = eta - mean
    out = np.zeros_like(mean, dtype=float)
    pos = std > 0
    z = imp[pos] / std[pos]
    out[pos] = imp[pos] * norm.cdf(z) + std[pos] * norm.pdf(z)
    return np.maximum(out, 0.0)


def pi(pred: GaussianPrediction, eta: float) -> float:
    """Probability of improving on eta."""
    if pred.std == 0:
        return 1.0 if pred.mean < eta else 0.0
    return float(norm.cdf((eta - pred.mean) / pred.std))


def ucb(pred: GaussianPrediction, beta: float = DEFAULT_UCB_BETA) -> float:
    """Optimistic score for minimization: -mean + beta * std (maximized)."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return -pred.mean + beta * pred.std


def pof(constraint_preds: Sequence[GaussianPrediction]) -> float:
    """Probability that every constraint surrogate predicts c(x) <= 0."""
    if not constraint_preds:
        raise ValueError("need at least one constraint prediction")
    means = np.array([p.mean for p in constraint_preds])
    stds = np.array([p.std for p in constraint_preds])
    return float(pof_vec(means[None, :], stds[None, :])[0])


def pof_vec(means: np.ndarray, stds: np.ndarray) -> np.ndarray:
    """Row-wise feasibility probability for (n, q) prediction arrays."""
    probs = np.where(
        stds > 0,
        norm.cdf(np.divide(-means, stds, out=np.zeros_like(means), where=stds > 0)),
        (means <= 0).astype(float),
    )
    return probs.prod(axis=1)


def constrained_acq(base: float, feasibility: float) -> float:
    """Constraint-weighted acquisition: base score times feasibility."""
    return base * feasibility


# ---------------------------------------------------------------------------
# Pareto front and hypervolume
# ---------------------------------------------------------------------------


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Weak Pareto dominance for minimization: a <= b with one strict."""
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def pareto_filter(points: np.ndarray) -> np.ndarray:
    """Indices of the non-dominated subset (first occurrence wins on ties)."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n <= 1:
        return np.arange(n)
    if points.shape[1] == 2:
        # sorted sweep: after ordering by (f1, f2, index), a point survives
        # iff its f2 strictly undercuts everything seen before it
        order = np.lexsort((np.arange(n), points[:, 1], points[:, 0]))
        keep = np.zeros(n, dtype=bool)
        best_f2 = math.inf
        for idx in order:
            if points[idx, 1] < best_f2:
                keep[idx] = True
                best_f2 = points[idx, 1]
        return np.flatnonzero(keep)
    keep = np.ones(n, dtype=bool)
    idx_all = np.arange(n)
    for start in range(0, n, 256):
        block = points[start : start + 256]
        le = (points[:, None, :] <= block[None, :, :]).all(axis=2)
        lt = (points[:, None, :] < block[None, :, :]).any(axis=2)
        dominated = (le & lt).any(axis=0)
        eq = le & ~lt  # exact duplicates (row j equals block column i)
        earlier_dup = (eq & (idx_all[:, None] < idx_all[None, start : start + 256])).any(axis=0)
        keep[start : start + 256] &= ~(dominated | earlier_dup)
    return np.flatnonzero(keep)


@dataclass(frozen=True)
class ParetoFront:
    """Mutually non-dominated objective vectors strictly inside the reference box."""

    points: tuple[tuple[float, ...], ...]
    ref: tuple[float, ...]

    def __post_init__(self) -> None:
        r = np.asarray(self.ref, dtype=float)
        for pt in self.points:
            if len(pt) != len(self.ref):
                raise ValueError("point dimension mismatch with reference point")
            if not np.all(np.asarray(pt) < r):
                raise ValueError(f"point {pt} does not strictly dominate the reference")
        arr = np.asarray(self.points, dtype=float)
        if len(arr) and len(pareto_filter(arr)) != len(arr):
            raise ValueError("front contains dominated points")

    @classmethod
    def from_points(
        cls, points: Sequence[Sequence[float]], ref: Sequence[float]
    ) -> "ParetoFront":
        """Build a front from raw observations, dropping dominated points and
        points outside the reference box."""
        ref_t = tuple(float(v) for v in ref)
        arr = np.asarray([[float(v) for v in p] for p in points], dtype=float)
        if arr.size == 0:
            return cls((), ref_t)
        inside = np.all(arr < np.asarray(ref_t), axis=1)
        arr = arr[inside]
        if len(arr) == 0:
            return cls((), ref_t)
        arr = arr[pareto_filter(arr)]
        order = np.lexsort(arr.T[::-1])
        return cls(tuple(tuple(row) for row in arr[order]), ref_t)

    @property
    def dim(self) -> int:
        return len(self.ref)

    def __len__(self) -> int:
        return len(self.points)


def _hv_recursive(pts: np.ndarray, ref: np.ndarray) -> float:
    """Exact dominated hypervolume by recursive slicing on the last objective."""
    if len(pts) == 0:
        return 0.0
    if pts.shape[1] == 1:
        return float(ref[0] - pts.min())
    if pts.shape[1] == 2:
        order = np.argsort(pts[:, 0])
        sorted_pts = pts[order]
        total, prev_f2 = 0.0, ref[1]
        for f1, f2 in sorted_pts:
            if f2 < prev_f2:
                total += (ref[0] - f1) * (prev_f2 - f2)
                prev_f2 = f2
        return float(total)
    order = np.argsort(pts[:, -1])
    pts = pts[order]
    total = 0.0
    for i in range(len(pts)):
        z_lo = pts[i, -1]
        z_hi = pts[i + 1, -1] if i + 1 < len(pts) else ref[-1]
        if z_hi > z_lo:
            proj = pts[: i + 1, :-1]
            proj = proj[pareto_filter(proj)]
            total += _hv_recursive(proj, ref[:-1]) * (z_hi - z_lo)
    return float(total)


def hypervolume(front: ParetoFront) -> float:
    """Lebesgue measure of the region dominated by the front up to its reference."""
    if len(front) == 0:
        return 0.0
    return _hv_recursive(np.asarray(front.points), np.asarray(front.ref))


# ---------------------------------------------------------------------------
# Expected hypervolume improvement
# ---------------------------------------------------------------------------


def _exp_below(h: float, mu: float, sigma: float) -> float:
    """E[(h - Y)^+] for Y ~ N(mu, sigma^2)."""
    if sigma == 0:
        return max(h - mu, 0.0)
    z = (h - mu) / sigma
    return (h - mu) * norm.cdf(z) + sigma * norm.pdf(z)


def _exp_strip_width(s: float, c: float, mu: float, sigma: float) -> float:
    """E[(c - max(Y, s))^+] for Y ~ N(mu, sigma^2); s may be -inf."""
    if c <= s:
        return 0.0
    if sigma == 0:
        return max(c - max(mu, s), 0.0) if mu < c else 0.0
    if math.isinf(s):
        return _exp_below(c, mu, sigma)
    alpha = (s - mu) / sigma
    beta = (c - mu) / sigma
    return (
        (c - s) * norm.cdf(alpha)
        + (c - mu) * (norm.cdf(beta) - norm.cdf(alpha))
        - sigma * (norm.pdf(alpha) - norm.pdf(beta))
    )


def _ehvi_2d(
    means: np.ndarray, stds: np.ndarray, front: ParetoFront
) -> float:
    """Analytic bi-objective expected hypervolume improvement.

    The non-dominated region splits into vertical strips between consecutive
    front points (sorted by the first objective); independence of the two
    predictive marginals factorizes each strip's contribution.
    """
    r1, r2 = front.ref
    pts = sorted(front.points)  # f1 ascending, hence f2 descending
    bounds = [-math.inf] + [p[0] for p in pts] + [r1]
    heights = [r2] + [min(p[1], r2) for p in pts]
    total = 0.0
    for j in range(len(heights)):
        width = _exp_strip_width(bounds[j], bounds[j + 1], means[0], stds[0])
        if width > 0:
            total += width * _exp_below(heights[j], means[1], stds[1])
    return total


def ehvi2d_vec(
    means: np.ndarray, stds: np.ndarray, front: ParetoFront
) -> np.ndarray:
    """Batched analytic bi-objective EHVI for (n, 2) prediction arrays.

    Standard deviations are floored at 1e-12; use :func:`ehvi` for exact
    handling of degenerate predictions.
    """
    r1, r2 = front.ref
    pts = sorted(front.points)
    s = np.array([-math.inf] + [p[0] for p in pts])
    c = np.array([p[0] for p in pts] + [r1])
    h = np.array([r2] + [min(p[1], r2) for p in pts])
    mu1 = means[:, 0:1]
    sd1 = np.maximum(stds[:, 0:1], 1e-12)
    mu2 = means[:, 1:2]
    sd2 = np.maximum(stds[:, 1:2], 1e-12)

    alpha = (s - mu1) / sd1
    beta = (c - mu1) / sd1
    span = np.where(np.isinf(s), 0.0, c - s)  # first strip's term vanishes anyway
    widths = (
        span * norm.cdf(alpha)
        + (c - mu1) * (norm.cdf(beta) - norm.cdf(alpha))
        - sd1 * (norm.pdf(alpha) - norm.pdf(beta))
    )
    z = (h - mu2) / sd2
    heights = (h - mu2) * norm.cdf(z) + sd2 * norm.pdf(z)
    return np.maximum((np.maximum(widths, 0.0) * np.maximum(heights, 0.0)).sum(axis=1), 0.0)


def ehvi_mc(
    preds: Sequence[GaussianPrediction],
    front: ParetoFront,
    draws: int = 10_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo expected hypervolume improvement: (estimate, standard error)."""
    rng = np.random.default_rng(seed)
    means = np.array([p.mean for p in preds])
    stds = np.array([p.std for p in preds])
    samples = rng.normal(means, stds, size=(draws, len(preds)))
    base_pts = np.asarray(front.points, dtype=float).reshape(len(front), front.dim)
    ref = np.asarray(front.ref)
    base_hv = hypervolume(front)
    gains = np.zeros(draws)
    for i, y in enumerate(samples):
        if np.all(y < ref):
            pts = np.vstack([base_pts, y]) if len(base_pts) else y[None, :]
            pts = pts[pareto_filter(pts)]
            gains[i] = _hv_recursive(pts, ref) - base_hv
    gains = np.maximum(gains, 0.0)
    return float(gains.mean()), float(gains.std(ddof=1) / math.sqrt(draws))


def ehvi(
    preds: Sequence[GaussianPrediction],
    front: ParetoFront,
    mc_draws: int = 10_000,
    seed: int = 0,
) -> float:
    """Expected hypervolume improvement of one new draw from the predictions.

    Bi-objective problems use the exact strip decomposition; higher
    dimensions fall back to Monte Carlo with `mc_draws` samples.
    """
    if len(preds) != front.dim:
        raise ValueError("prediction count must match front dimension")
    means = np.array([p.mean for p in preds])
    stds = np.array([p.std for p in preds])
    if front.dim == 2:
        return _ehvi_2d(means, stds, front)
    return ehvi_mc(preds, front, draws=mc_draws, seed=seed)[0]


# ---------------------------------------------------------------------------
# Acquisition optimizers
# ---------------------------------------------------------------------------


def _make_batch_score(
    space: SearchSpace,
    score_fn: Callable[[Configuration], float],
    batch_score: Callable[[np.ndarray], np.ndarray] | None,
) -> Callable[[np.ndarray], np.ndarray]:
    if batch_score is not None:
        return batch_score

    def fallback(unit_matrix: np.ndarray) -> np.ndarray:
        return np.array(
            [score_fn(from_unit_vector(space, row)) for row in unit_matrix]
        )

    return fallback


def _continuous_search(
    space: SearchSpace,
    score: Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
    n_probes: int,
    restarts: int,
    iterations: int,
) -> np.ndarray:
    """Multi-start projected gradient ascent with forward-difference gradients."""
    from .space import encoded_width

    dim = encoded_width(space)
    probes = rng.uniform(0.0, 1.0, size=(n_probes, dim))
    probe_scores = score(probes)
    order = np.argsort(probe_scores)[::-1]
    starts = probes[order[: restarts + 1]]

    X = starts.copy()
    fx = probe_scores[order[: restarts + 1]].copy()
    steps = np.full(len(X), 0.1)
    h = 1e-6
    for _ in range(iterations):
        batch = [X]
        for d in range(dim):
            shifted = X.copy()
            shifted[:, d] = np.minimum(shifted[:, d] + h, 1.0)
            batch.append(shifted)
        values = score(np.vstack(batch)).reshape(dim + 1, len(X))
        grad = (values[1:] - values[0]) / h  # dim x starts
        norms = np.linalg.norm(grad, axis=0)
        norms[norms == 0] = 1.0
        candidates = np.clip(X + (steps * grad / norms).T, 0.0, 1.0)
        f_cand = score(candidates)
        improved = f_cand > fx
        X[improved] = candidates[improved]
        fx[improved] = f_cand[improved]
        steps[improved] *= 1.3
        steps[~improved] *= 0.5
        if np.all(steps < 1e-7):
            break
    best = int(np.argmax(fx))
    return X[best]


def _perturb_one(
    space: SearchSpace, config: Configuration, rng: np.random.Generator, scale: float
) -> Configuration:
    """One-exchange neighbor: re-draw or nudge a single active parameter."""
    values = config.as_dict()
    names = list(values)
    name = names[int(rng.integers(len(names)))]
    param = space[name]
    if param.kind is ParamKind.FLOAT:
        width = param.high - param.low
        values[name] = float(
            np.clip(values[name] + rng.normal(0, scale * width), param.low, param.high)
        )
    elif param.kind is ParamKind.INTEGER:
        width = param.high - param.low
        step = rng.normal(0, max(scale * width, 0.6))
        values[name] = int(
            np.clip(round(values[name] + step), param.low, param.high)
        )
    else:
        values[name] = param.choices[int(rng.integers(len(param.choices)))]
    # re-evaluate conditions: activate/deactivate children of the changed value
    active = set(space.active_names(values))
    for p in space.parameters:
        if p.name in active and p.name not in values:
            values[p.name] = p.fallback_value()
    values = {k: v for k, v in values.items() if k in active}
    return Configuration.from_dict(values)


def _mixed_search(
    space: SearchSpace,
    configs_score: Callable[[list[Configuration]], np.ndarray],
    rng: np.random.Generator,
    n_probes: int,
    rounds: int,
    top_k: int = 10,
) -> Configuration:
    """Interleaved local (one-exchange) and random search over mixed spaces."""
    probes = sample_random(space, int(rng.integers(2**31 - 1)), n_probes)
    scores = configs_score(probes)
    order = np.argsort(scores)[::-1]
    current = [probes[i] for i in order[:top_k]]
    current_scores = scores[order[:top_k]].copy()
    scales = np.full(len(current), 0.1)
    best_idx = int(np.argmax(current_scores))
    best, best_score = current[best_idx], float(current_scores[best_idx])

    for _ in range(rounds):
        neighbors = [
            _perturb_one(space, c, rng, scales[i]) for i, c in enumerate(current)
        ]
        fresh = sample_random(space, int(rng.integers(2**31 - 1)), len(current))
        values = configs_score(neighbors + fresh)
        n_curr = len(current)
        for i in range(n_curr):
            moved = False
            if values[i] > current_scores[i]:
                current[i], current_scores[i] = neighbors[i], values[i]
                moved = True
            if values[n_curr + i] > current_scores[i]:
                current[i], current_scores[i] = fresh[i], values[n_curr + i]
                moved = True
            scales[i] = min(scales[i] * 1.2, 0.5) if moved else max(scales[i] * 0.5, 1e-3)
        round_best = int(np.argmax(current_scores))
        if current_scores[round_best] > best_score:
            best, best_score = current[round_best], float(current_scores[round_best])
    return best


def optimize_acq(
    space: SearchSpace,
    score_fn: Callable[[Configuration], float],
    strategy: str | None = None,
    seed: int = 0,
    batch_score: Callable[[np.ndarray], np.ndarray] | None = None,
    n_probes: int = 1000,
    restarts: int = 10,
    iterations: int = 30,
) -> Configuration:
    """Maximize an acquisition over a space; deterministic given the seed.

    Purely numeric spaces use multi-start projected gradient ascent with
    forward-difference gradients, seeded from the best random probes.  Mixed
    spaces use interleaved one-exchange local search and random probing.
    `batch_score` optionally scores a matrix of unit-cube rows in one call;
    without it, `score_fn` is applied configuration by configuration.
    """
    if strategy is None:
        strategy = "continuous" if space.is_purely_numeric() else "mixed"
    rng = np.random.default_rng(seed)
    if strategy == "continuous":
        vec_score = _make_batch_score(space, score_fn, batch_score)
        best_vec = _continuous_search(
            space, vec_score, rng, n_probes, restarts, iterations
        )
        best = from_unit_vector(space, best_vec)
    elif strategy == "mixed":

        def configs_score(configs: list[Configuration]) -> np.ndarray:
            if batch_score is not None:
                rows = np.vstack([to_unit_vector(space, c) for c in configs])
                return batch_score(rows)
            return np.array([score_fn(c) for c in configs])

        best = _mixed_search(space, configs_score, rng, n_probes, rounds=iterations)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    if validate_config(space, best):
        raise AssertionError("optimizer produced an invalid configuration")
    return best
