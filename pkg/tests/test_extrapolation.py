import math

import numpy as np
import pytest

from gbbo.extrapolation import (
    CostStats,
    CurvePosterior,
    MCMCConfig,
    PerfCurve,
    advise_min_budget,
    advise_min_workers,
    default_improvement_delta,
    fit_curve_posterior,
    prob_improvement,
    should_stop_early,
)


def pow_curve(n, c=0.1, a=1.0, alpha=1.0, noise=0.005, seed=0):
    t = np.arange(1, n + 1, dtype=float)
    rng = np.random.default_rng(seed)
    z = c + a * t**-alpha + rng.normal(0, noise, n)
    return PerfCurve(z=tuple(np.minimum.accumulate(z)))


def exp_curve(n, c=0.1, a=1.0, b=0.25, noise=0.005, seed=0):
    t = np.arange(1, n + 1, dtype=float)
    rng = np.random.default_rng(seed)
    z = c + a * np.exp(-b * t) + rng.normal(0, noise, n)
    return PerfCurve(z=tuple(np.minimum.accumulate(z)))


def flat_curve(n, value=0.5):
    return PerfCurve(z=(value,) * n, costs=(10.0,) * n)


class TestPerfCurve:
    def test_monotonicity_enforced(self):
        with pytest.raises(ValueError, match="non-increasing"):
            PerfCurve(z=(1.0, 0.5, 0.7))

    def test_finite_enforced(self):
        with pytest.raises(ValueError, match="finite"):
            PerfCurve(z=(1.0, float("nan")))


class TestFitCurvePosterior:
    def test_recovers_pow_tail(self):
        post = fit_curve_posterior(pow_curve(30), horizon=150, seed=1)
        predicted = post.curve_mean(100.0).mean()
        assert abs(predicted - 0.11) <= 0.02

    def test_flat_curve_concentrates(self):
        post = fit_curve_posterior(flat_curve(20), horizon=100, seed=2)
        assert abs(post.curve_mean(100.0).mean() - 0.5) <= 0.01

    def test_decreasing_indicator_on_every_sample(self):
        post = fit_curve_posterior(pow_curve(25, seed=3), horizon=125, seed=3)
        vals = post.curve_mean(np.array([1.0, float(post.horizon)]))
        assert np.all(vals[:, 0] > vals[:, 1])

    def test_needs_five_points(self):
        with pytest.raises(ValueError, match="at least 5"):
            fit_curve_posterior(PerfCurve(z=(3.0, 2.0, 1.0)), horizon=10)

    def test_horizon_must_be_future(self):
        with pytest.raises(ValueError, match="horizon"):
            fit_curve_posterior(flat_curve(10), horizon=10)

    def test_reproducible(self):
        a = fit_curve_posterior(pow_curve(20), horizon=100, seed=7)
        b = fit_curve_posterior(pow_curve(20), horizon=100, seed=7)
        assert np.array_equal(a.thetas, b.thetas)

    @pytest.mark.parametrize("family,maker", [("pow", pow_curve), ("exp", exp_curve)])
    def test_recovers_generating_family(self, family, maker):
        # weight attribution needs a longer chain than the advice defaults
        mcmc = MCMCConfig(burn_in=4000, samples=100, thinning=20)
        wins = 0
        for seed in range(10):
            curve = maker(30, seed=seed)
            post = fit_curve_posterior(curve, horizon=150, mcmc=mcmc, seed=seed)
            weights = post.family_weight_means()
            if max(weights, key=weights.get) == family:
                wins += 1
        assert wins >= 9

    def test_samples_count(self):
        mcmc = MCMCConfig(burn_in=200, samples=50, thinning=2)
        post = fit_curve_posterior(pow_curve(20), horizon=60, mcmc=mcmc, seed=0)
        assert post.n_samples == 50


class TestProbImprovement:
    def test_flat_curve_unlikely_to_improve(self):
        post = fit_curve_posterior(flat_curve(20), horizon=100, seed=0)
        assert prob_improvement(post, 50, delta=0.05) < 0.1

    def test_steep_curve_likely_to_improve(self):
        post = fit_curve_posterior(pow_curve(30), horizon=150, seed=1)
        # true z_100 = 0.11 vs z_30 ~ 0.133: a 0.023 improvement dwarfs delta
        assert prob_improvement(post, 100, delta=0.01) > 0.5

    def test_vanishes_for_huge_delta(self):
        post = fit_curve_posterior(pow_curve(30), horizon=150, seed=1)
        assert prob_improvement(post, 100, delta=1e6) < 1e-12

    def test_monotone_in_delta(self):
        post = fit_curve_posterior(pow_curve(25), horizon=100, seed=2)
        deltas = [1e-4, 1e-3, 1e-2, 1e-1]
        probs = [prob_improvement(post, 80, d) for d in deltas]
        assert all(a >= b for a, b in zip(probs, probs[1:]))

    def test_monotone_in_t_for_saturating_fit(self):
        post = fit_curve_posterior(pow_curve(25), horizon=200, seed=4)
        probs = [prob_improvement(post, t, 0.01) for t in (30, 60, 120, 200)]
        assert all(b >= a - 1e-9 for a, b in zip(probs, probs[1:]))

    def test_requires_future_t(self):
        post = fit_curve_posterior(pow_curve(20), horizon=100, seed=0)
        with pytest.raises(ValueError, match="future"):
            prob_improvement(post, 20, 0.01)


class TestAdvice:
    def test_flat_curve_minimal_budget(self):
        post = fit_curve_posterior(flat_curve(20), horizon=100, seed=0)
        budget, t_star = advise_min_budget(post, workers=1, cost_stats=CostStats(10.0))
        assert t_star == post.n + 1
        assert budget == 10.0  # one cost slot

    def test_budget_arithmetic_identity(self):
        post = fit_curve_posterior(pow_curve(30), horizon=150, seed=1)
        cost = CostStats(10.0)
        for workers in (1, 2, 4):
            budget, t_star = advise_min_budget(post, workers, cost)
            assert budget == math.ceil((t_star - post.n) / workers) * 10.0

    def test_doubling_workers_halves_budget(self):
        post = fit_curve_posterior(pow_curve(30), horizon=150, seed=1)
        cost = CostStats(10.0)
        b1, t1 = advise_min_budget(post, 1, cost)
        b2, t2 = advise_min_budget(post, 2, cost)
        assert t1 == t2
        assert b2 <= b1 / 2 + 10.0  # within one cost quantum

    def test_worker_arithmetic_identity(self):
        post = fit_curve_posterior(pow_curve(30), horizon=150, seed=1)
        cost = CostStats(10.0)
        workers, t_star = advise_min_workers(post, budget=100.0, cost_stats=cost)
        assert workers == max(1, math.ceil((t_star - post.n) * 10.0 / 100.0))

    def test_generous_budget_needs_one_worker(self):
        post = fit_curve_posterior(pow_curve(30), horizon=150, seed=1)
        workers, _ = advise_min_workers(post, budget=1e9, cost_stats=CostStats(10.0))
        assert workers == 1

    def test_flat_curve_one_worker(self):
        post = fit_curve_posterior(flat_curve(20), horizon=100, seed=0)
        workers, _ = advise_min_workers(post, budget=100.0, cost_stats=CostStats(10.0))
        assert workers == 1


class TestShouldStopEarly:
    def test_worse_than_median_stops(self):
        assert should_stop_early(5.0, [1.0, 2.0, 3.0], "median", min_history=3)

    def test_better_than_median_continues(self):
        assert not should_stop_early(1.5, [1.0, 2.0, 3.0], "median", min_history=3)

    def test_warmup_guard(self):
        assert not should_stop_early(100.0, [1.0, 2.0], "median", min_history=5)

    def test_mean_rule(self):
        assert should_stop_early(2.6, [1.0, 2.0, 4.5], "mean", min_history=3)
        assert not should_stop_early(2.4, [1.0, 2.0, 4.5], "mean", min_history=3)

    def test_equal_to_threshold_continues(self):
        assert not should_stop_early(2.0, [1.0, 2.0, 3.0], "median", min_history=3)

    def test_unknown_rule(self):
        with pytest.raises(ValueError, match="unknown rule"):
            should_stop_early(1.0, [1.0], "mode")


class TestDefaultDelta:
    def test_fraction_of_range(self):
        assert default_improvement_delta([0.0, 10.0]) == pytest.approx(0.01)

    def test_flat_range_still_positive(self):
        assert default_improvement_delta([5.0, 5.0]) > 0
