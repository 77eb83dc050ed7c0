"""Performance-resource extrapolation and early stopping.

The best-so-far performance sequence of a task (negated hypervolume for
multi-objective tasks) is a non-increasing, saturating curve.  A weighted
mixture of decreasing saturating decay families plus a shared offset is fit
to it by random-walk Metropolis; the posterior yields the probability that
future trials still produce a meaningful improvement, which converts into
minimal-budget and minimal-worker advice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

__all__ = [
    "PerfCurve",
    "CurveFamily",
    "CurvePosterior",
    "MCMCConfig",
    "CostStats",
    "fit_curve_posterior",
    "prob_improvement",
    "advise_min_budget",
    "advise_min_workers",
    "should_stop_early",
    "DEFAULT_P_STOP",
    "default_improvement_delta",
    "advice_delta",
]

DEFAULT_P_STOP = 0.05


@dataclass(frozen=True)
class PerfCurve:
    """Best-so-far performance per completed trial, with per-trial costs."""

    z: tuple[float, ...]
    timestamps: tuple[float, ...] = ()
    costs: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        arr = np.asarray(self.z, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("performance values must be finite")
        if np.any(np.diff(arr) > 1e-9):
            raise ValueError("best-so-far sequence must be non-increasing")

    def __len__(self) -> int:
        return len(self.z)


@dataclass(frozen=True)
class CurveFamily:
    """Unit-amplitude decay: d(1) = 1, strictly decreasing toward 0."""

    name: str
    n_params: int

    def decay(self, t: np.ndarray, params: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.name == "pow":
            (alpha,) = params
            return t**-alpha
        if self.name == "exp":
            (b,) = params
            return np.exp(-b * (t - 1.0))
        if self.name == "logpow":
            b, alpha = params
            return (1.0 + b**-alpha) / (1.0 + (t / b) ** alpha)
        raise ValueError(self.name)


FAMILIES = (CurveFamily("pow", 1), CurveFamily("exp", 1), CurveFamily("logpow", 2))

# log-space bounds per sampled parameter (None = raw/unbounded offset)
_LOG_BOUNDS = {
    "w": (math.log(1e-4), math.log(100.0)),
    "sigma": (math.log(1e-5), math.log(1.0)),
    "pow.alpha": (math.log(0.05), math.log(5.0)),
    "exp.b": (math.log(1e-2), math.log(5.0)),
    "logpow.b": (math.log(0.5), math.log(500.0)),
    "logpow.alpha": (math.log(0.3), math.log(5.0)),
}

_PARAM_KEYS = ("pow.alpha", "exp.b", "logpow.b", "logpow.alpha")
# theta layout: [c, log w_1..w_3, log sigma, log shape params...]
_DIM = 1 + len(FAMILIES) + 1 + len(_PARAM_KEYS)


@dataclass(frozen=True)
class MCMCConfig:
    chains: int = 1
    burn_in: int = 500
    samples: int = 100
    thinning: int = 5
    step: float = 0.05


@dataclass(frozen=True)
class CostStats:
    mean_cost: float

    @classmethod
    def from_elapsed(cls, elapsed: Sequence[float]) -> "CostStats":
        vals = [e for e in elapsed if np.isfinite(e)]
        return cls(mean_cost=float(np.mean(vals)) if vals else 0.0)


def _unpack(theta: np.ndarray) -> tuple[float, np.ndarray, float, list[np.ndarray]]:
    c = float(theta[0])
    w = np.exp(theta[1 : 1 + len(FAMILIES)])
    sigma = float(math.exp(theta[1 + len(FAMILIES)]))
    shapes, k = [], 2 + len(FAMILIES)
    for fam in FAMILIES:
        shapes.append(np.exp(theta[k : k + fam.n_params]))
        k += fam.n_params
    return c, w, sigma, shapes


def _curve_values(theta: np.ndarray, t: np.ndarray) -> np.ndarray:
    c, w, _, shapes = _unpack(theta)
    total = np.full_like(np.asarray(t, dtype=float), c)
    for fam, weight, params in zip(FAMILIES, w, shapes):
        total = total + weight * fam.decay(t, params)
    return total


def _log_bounds_vector() -> tuple[np.ndarray, np.ndarray]:
    lo = [-np.inf]
    hi = [np.inf]
    lo += [_LOG_BOUNDS["w"][0]] * len(FAMILIES)
    hi += [_LOG_BOUNDS["w"][1]] * len(FAMILIES)
    lo.append(_LOG_BOUNDS["sigma"][0])
    hi.append(_LOG_BOUNDS["sigma"][1])
    for key in _PARAM_KEYS:
        lo.append(_LOG_BOUNDS[key][0])
        hi.append(_LOG_BOUNDS[key][1])
    return np.array(lo), np.array(hi)


@dataclass(frozen=True)
class CurvePosterior:
    """Retained posterior samples over the combined-curve parameters.

    Samples live on the normalized scale z' = (z - offset)/scale; evaluation
    maps back to the original performance units.
    """

    thetas: np.ndarray = field(repr=False)  # (S, _DIM)
    acceptance_rate: float
    n: int
    z: tuple[float, ...]
    offset: float
    scale: float
    horizon: int

    @property
    def n_samples(self) -> int:
        return self.thetas.shape[0]

    @property
    def z_last(self) -> float:
        return self.z[-1]

    def curve_mean(self, t) -> np.ndarray:
        """Posterior curve values at trial index t: (S, len(t)) original scale."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        vals = np.vstack([_curve_values(theta, t) for theta in self.thetas])
        return self.offset + self.scale * vals

    def noise_std(self) -> np.ndarray:
        return self.scale * np.array([_unpack(th)[2] for th in self.thetas])

    def family_weight_means(self) -> dict[str, float]:
        w = np.vstack([_unpack(th)[1] for th in self.thetas])
        return {fam.name: float(w[:, i].mean()) for i, fam in enumerate(FAMILIES)}


def _initial_theta(z_norm: np.ndarray) -> np.ndarray:
    amplitude = max(float(z_norm[0] - z_norm[-1]), 1e-3)
    theta = np.zeros(_DIM)
    theta[0] = float(z_norm[-1])
    theta[1 : 1 + len(FAMILIES)] = math.log(amplitude / len(FAMILIES))
    resid = float(np.std(np.diff(z_norm))) if len(z_norm) > 1 else 0.01
    theta[1 + len(FAMILIES)] = math.log(min(max(resid, 1e-3), 0.5))
    n = len(z_norm)
    theta[2 + len(FAMILIES) :] = [
        math.log(0.7),  # pow alpha
        math.log(min(max(3.0 / n, 0.02), 2.0)),  # exp b
        math.log(max(n / 2.0, 1.0)),  # logpow b
        math.log(1.5),  # logpow alpha
    ]
    return theta


def fit_curve_posterior(
    curve: PerfCurve,
    horizon: int,
    mcmc: MCMCConfig | None = None,
    seed: int = 0,
) -> CurvePosterior:
    """Random-walk Metropolis over the mixture-curve parameters.

    Positive parameters are sampled in log space; the shared offset is
    sampled raw.  Proposals outside the prior support (bounds, or violating
    the decreasing indicator between t=1 and the horizon) are rejected.  The
    step size adapts toward a 0.2-0.5 acceptance rate during burn-in.
    """
    mcmc = mcmc or MCMCConfig()
    n = len(curve)
    if n < 5:
        raise ValueError("need at least 5 observations to extrapolate")
    if horizon <= n:
        raise ValueError("horizon must exceed the observed length")

    z = np.asarray(curve.z, dtype=float)
    offset = float(z.min())
    scale = float(z.max() - z.min())
    if scale < 1e-12:
        scale = 1.0
    z_norm = (z - offset) / scale
    t_obs = np.arange(1, n + 1, dtype=float)
    lo, hi = _log_bounds_vector()

    def log_post(theta: np.ndarray) -> float:
        if np.any(theta[1:] < lo[1:]) or np.any(theta[1:] > hi[1:]):
            return -np.inf
        g1, gT = _curve_values(theta, np.array([1.0, float(horizon)]))
        if not g1 > gT:  # decreasing-curve prior indicator
            return -np.inf
        mean = _curve_values(theta, t_obs)
        sigma = _unpack(theta)[2]
        resid = z_norm - mean
        return float(-0.5 * np.sum(resid**2) / sigma**2 - n * math.log(sigma))

    rng = np.random.default_rng(seed)
    theta = _initial_theta(z_norm)
    current_lp = log_post(theta)
    step = mcmc.step
    shrink_attempts = 0
    accepted_burn = window_accept = window_count = 0
    for i in range(mcmc.burn_in):
        prop = theta + rng.normal(0, step, size=_DIM)
        lp = log_post(prop)
        if math.log(rng.uniform()) < lp - current_lp:
            theta, current_lp = prop, lp
            accepted_burn += 1
            window_accept += 1
        window_count += 1
        if window_count == 50:
            rate = window_accept / window_count
            if rate < 0.2:
                step *= 0.5
                shrink_attempts += 1
            elif rate > 0.5:
                step *= 2.0
                shrink_attempts = 0
            if shrink_attempts > 12:
                raise RuntimeError("sampler stalled: all proposals rejected")
            window_accept = window_count = 0

    keep = []
    accepted = total = 0
    while len(keep) < mcmc.samples:
        for _ in range(mcmc.thinning):
            prop = theta + rng.normal(0, step, size=_DIM)
            lp = log_post(prop)
            total += 1
            if math.log(rng.uniform()) < lp - current_lp:
                theta, current_lp = prop, lp
                accepted += 1
        keep.append(theta.copy())
    return CurvePosterior(
        thetas=np.vstack(keep),
        acceptance_rate=accepted / max(total, 1),
        n=n,
        z=tuple(float(v) for v in z),
        offset=offset,
        scale=scale,
        horizon=int(horizon),
    )


def default_improvement_delta(z: Sequence[float]) -> float:
    """Meaningful-improvement default: 0.1% of the observed range."""
    arr = np.asarray(z, dtype=float)
    return max(1e-3 * float(arr.max() - arr.min()), 1e-12)


def advice_delta(post: CurvePosterior) -> float:
    """Improvement threshold used by the advice calls.

    0.1% of the observed range normally; when the curve never moved, any
    "improvement" below the fitted noise level would be indistinguishable
    from noise, so the threshold floors at three posterior noise deviations.
    """
    spread = max(post.z) - min(post.z)
    if spread < 1e-12:
        return max(3.0 * float(np.median(post.noise_std())), 1e-9)
    return max(1e-3 * spread, 1e-12)


def prob_improvement(post: CurvePosterior, t: int, delta: float) -> float:
    """P(z_t < z_n - delta): chance trial t improves meaningfully on the best."""
    if t <= post.n:
        raise ValueError("t must be a future trial index")
    if delta <= 0:
        raise ValueError("delta must be positive")
    means = post.curve_mean(float(t))[:, 0]
    sigmas = np.maximum(post.noise_std(), 1e-300)
    probs = norm.cdf((post.z_last - delta - means) / sigmas)
    return float(np.mean(probs))


def _stopping_trial(
    post: CurvePosterior, delta: float | None, p_stop: float
) -> int:
    """Smallest future t whose improvement probability drops below p_stop."""
    if delta is None:
        delta = advice_delta(post)
    for t in range(post.n + 1, post.horizon + 1):
        if prob_improvement(post, t, delta) < p_stop:
            return t
    return post.horizon


def advise_min_budget(
    post: CurvePosterior,
    workers: int,
    cost_stats: CostStats,
    delta: float | None = None,
    p_stop: float = DEFAULT_P_STOP,
) -> tuple[float, int]:
    """Minimal time budget to reach the saturation trial with `workers` workers.

    Returns (budget_seconds, t_star); workers evaluate trials concurrently, so
    the remaining trials are spread over ceil((t* - n)/workers) slots.
    """
    if workers < 1:
        raise ValueError("need at least one worker")
    t_star = _stopping_trial(post, delta, p_stop)
    slots = math.ceil((t_star - post.n) / workers)
    return slots * cost_stats.mean_cost, t_star


def advise_min_workers(
    post: CurvePosterior,
    budget: float,
    cost_stats: CostStats,
    delta: float | None = None,
    p_stop: float = DEFAULT_P_STOP,
) -> tuple[int, int]:
    """Minimal workers finishing the remaining trials within `budget` seconds.

    Returns (workers, t_star), clamped to at least one worker.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    t_star = _stopping_trial(post, delta, p_stop)
    remaining = t_star - post.n
    if cost_stats.mean_cost <= 0:
        return 1, t_star
    return max(1, math.ceil(remaining * cost_stats.mean_cost / budget)), t_star


def should_stop_early(
    trial_best_so_far: float,
    completed_results: Sequence[float],
    rule: str = "median",
    min_history: int = 5,
) -> bool:
    """Stop a running trial strictly worse than the typical completed result.

    Never fires before `min_history` completed results exist.
    """
    if rule not in ("median", "mean"):
        raise ValueError(f"unknown rule {rule!r}")
    results = [r for r in completed_results if np.isfinite(r)]
    if len(results) < min_history:
        return False
    threshold = float(np.median(results) if rule == "median" else np.mean(results))
    return trial_best_so_far > threshold
