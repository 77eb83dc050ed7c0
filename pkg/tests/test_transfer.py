import math

import numpy as np
import pytest

import gbbo.advisor as adv
from gbbo.advisor import History, Observation, suggest
from gbbo.space import Configuration, ParamKind, Parameter, SearchSpace, TaskSpec
from gbbo.surrogate import GaussianPrediction, fit_gp
from gbbo.transfer import (
    TransferEnsemble,
    build_transfer_advisor,
    combined_predict,
    ranking_loss,
    rgpe_weights,
)


class FixedModel:
    """Surrogate stub with constant predictive moments per point."""

    def __init__(self, means, var=1e-6):
        self.means = np.asarray(means, dtype=float)
        self.var = var

    def predict_batch(self, rows):
        idx = np.clip((rows[:, 0] * len(self.means)).astype(int), 0, len(self.means) - 1)
        return self.means[idx], np.full(len(rows), self.var)


def spec_1d():
    return TaskSpec(space=SearchSpace((Parameter("x1", ParamKind.FLOAT, 0.0, 1.0),)))


def history_from(fn, xs, task_id="target"):
    completed = tuple(
        Observation(
            config=Configuration.from_dict({"x1": float(x)}),
            objectives=(float(fn(x)),),
            trial_id=f"t{i}",
        )
        for i, x in enumerate(xs)
    )
    return History(task_id=task_id, completed=completed)


class TestRankingLoss:
    def test_order_preserving_is_zero(self):
        assert ranking_loss([1.1, 2.2, 3.3], [1, 2, 3]) == 0

    def test_full_inversion_counts_both_directions(self):
        # over all 9 ordered pairs: the 6 with j != k are misranked
        assert ranking_loss([3, 2, 1], [1, 2, 3]) == 6

    def test_inversion_equals_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 8))
            preds = rng.normal(size=n)
            y = rng.normal(size=n)
            brute = sum(
                int((preds[j] < preds[k]) != (y[j] < y[k]))
                for j in range(n)
                for k in range(n)
            )
            assert ranking_loss(preds, y) == brute


class TestRGPEWeights:
    def test_perfect_source_beats_inverted_source(self):
        y = np.arange(10, dtype=float)
        X = np.linspace(0, 1, 10, endpoint=False)[:, None]
        good = FixedModel(y * 1.1)  # orders target perfectly, loss 0
        bad = FixedModel(y[::-1])  # exactly inverse, loss 2*C(10,2) = 90
        target = fit_gp(X, y + np.random.default_rng(0).normal(0, 0.5, 10), seed=0, restarts=3)
        w = rgpe_weights([good, bad], target, X, y, samples=200, seed=1)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        source_mass = w[0] + w[1]
        assert w[0] >= 0.9 * source_mass

    def test_weights_on_simplex(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 1, size=(8, 1))
        y = np.sin(5 * X[:, 0])
        target = fit_gp(X, y, seed=0, restarts=3)
        models = [FixedModel(rng.normal(size=8), var=0.5) for _ in range(3)]
        w = rgpe_weights(models, target, X, y, samples=50, seed=2)
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_needs_two_observations(self):
        with pytest.raises(ValueError, match="two target"):
            rgpe_weights([], FixedModel([1.0]), np.zeros((1, 1)), np.array([1.0]))


class TestCombinedPredict:
    def test_degenerate_weight_returns_member_exactly(self):
        a = FixedModel([1.0, 2.0], var=0.5)
        b = FixedModel([5.0, 6.0], var=0.5)
        ens = TransferEnsemble((a, b), np.array([1.0, 0.0]))
        pred = combined_predict(ens, np.array([0.1]))
        assert pred.mean == 1.0 and pred.var == 0.5

    def test_symmetric_average(self):
        a = FixedModel([0.0], var=1.0)
        b = FixedModel([2.0], var=1.0)
        ens = TransferEnsemble((a, b), np.array([0.5, 0.5]))
        pred = combined_predict(ens, np.array([0.0]))
        assert pred.mean == pytest.approx(1.0)

    def test_precision_combination(self):
        # equal weights and unit variances: combined variance is

        # (0.5/1 + 0.5/1)^-1 = 1
        a = FixedModel([0.0], var=1.0)
        b = FixedModel([2.0], var=1.0)
        ens = TransferEnsemble((a, b), np.array([0.5, 0.5]))
        assert combined_predict(ens, np.array([0.0])).var == pytest.approx(1.0)

    def test_unequal_precisions_pull_mean(self):
        a = FixedModel([0.0], var=0.1)
        b = FixedModel([2.0], var=10.0)
        ens = TransferEnsemble((a, b), np.array([0.5, 0.5]))
        assert combined_predict(ens, np.array([0.0])).mean < 0.1

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ValueError):
            TransferEnsemble((FixedModel([1.0]),), np.array([0.0]))

    def test_off_simplex_rejected(self):
        with pytest.raises(ValueError, match="simplex"):
            TransferEnsemble((FixedModel([1.0]),), np.array([0.7]))


def quad(x):
    return (x - 0.3) ** 2


class TestTransferAdvisor:
    def test_no_sources_equals_plain_suggest(self):
        spec = spec_1d()
        history = history_from(quad, np.linspace(0.05, 0.95, 8))
        advisor = build_transfer_advisor([], spec)
        adv._HYPER_CACHE.clear()
        transferred = advisor.suggest(history, seed=11)
        adv._HYPER_CACHE.clear()
        plain = suggest(spec, history, seed=11)
        assert transferred == plain

    def test_incompatible_space_reports_parameters(self):
        other = History(
            completed=(
                Observation(
                    config=Configuration.from_dict({"zz": 0.5}),
                    objectives=(1.0,),
                    trial_id="s0",
                ),
            )
        )
        with pytest.raises(ValueError, match="zz"):
            build_transfer_advisor([other], spec_1d())

    def test_identical_source_gets_dominant_weight(self):
        spec = spec_1d()
        source = history_from(quad, np.linspace(0.02, 0.98, 50), task_id="src")
        advisor = build_transfer_advisor([source], spec)
        target = history_from(quad, np.linspace(0.1, 0.9, 12))
        w = advisor.weights_for(target)
        assert len(w) == 2
        assert w[0] >= 0.5  # the identical source should dominate

    def test_transfer_helps_on_identical_task(self):
        """Paired-run experiment: transfer from an identical source should not
        hurt the best-found value at a small trial budget (median over seeds)."""
        spec = spec_1d()
        source = history_from(quad, np.linspace(0.02, 0.98, 50), task_id="src")
        diffs = []
        for seed in range(6):
            best_with, best_without = [], []
            for use_transfer in (True, False):
                advisor = build_transfer_advisor([source], spec) if use_transfer else None
                history = History(task_id=f"run{seed}")
                best = math.inf
                for trial in range(12):
                    call_seed = adv.derive_seed(seed, trial)
                    if advisor is not None:
                        config = advisor.suggest(history, call_seed)
                    else:
                        config = suggest(spec, history, call_seed)
                    y = quad(config.get("x1"))
                    best = min(best, y)
                    history = History(
                        task_id=history.task_id,
                        completed=history.completed
                        + (
                            Observation(
                                config=config,
                                objectives=(float(y),),
                                trial_id=f"t{trial}",
                            ),
                        ),
                    )
                    (best_with if use_transfer else best_without).append(best)
            diffs.append(best_with[-1] - best_without[-1])
        assert np.median(diffs) <= 1e-3

    def test_fit_time_scales_linearly_in_sources(self):
        spec = spec_1d()
        rng = np.random.default_rng(0)
        target = history_from(quad, np.linspace(0.1, 0.9, 10))

        import time

        def time_suggest(k):
            sources = [
                history_from(
                    lambda x, s=s: (x - 0.3 - 0.01 * s) ** 2,
                    rng.uniform(0, 1, 30),
                    task_id=f"s{s}",
                )
                for s in range(k)
            ]
            advisor = build_transfer_advisor(sources, spec, weight_samples=50)
            advisor.suggest(target, seed=0)  # pay one-time base fits
            start = time.perf_counter()
            for i in range(3):
                advisor.suggest(target, seed=i + 1)
            return (time.perf_counter() - start) / 3

    # doubling sources from 4 to 8 must stay well below quadratic growth
        t4 = time_suggest(4)
        t8 = time_suggest(8)
        assert t8 / t4 < 2.5
