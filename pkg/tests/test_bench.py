import json
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from gbbo.bench import (
    REGISTRY,
    RunResult,
    get_problem,
    hv_difference,
    optimality_gap,
    run_experiment,
)
from gbbo.bench.cli import bench_main
from gbbo.bench.metrics import gap_series, ideal_hypervolume
from gbbo.bench.runner import load_results, run_single
from gbbo.space import Configuration


def cfg(problem, values):
    return Configuration.from_dict(
        {name: float(v) for name, v in zip(problem.space.names, values)}
    )


class TestEvaluate:
    def test_ackley_zero_at_origin(self):
        p = get_problem("ackley2")
        y, c = p.evaluate(cfg(p, [0.0, 0.0]))
        assert y[0] == pytest.approx(0.0, abs=1e-12)
        assert c == ()

    def test_beale_zero_at_optimum(self):
        p = get_problem("beale")
        y, _ = p.evaluate(cfg(p, [3.0, 0.5]))
        assert y[0] == pytest.approx(0.0, abs=1e-12)

    def test_branin_minimum_via_grid_oracle(self):
        p = get_problem("branin")
        xs = np.linspace(-5, 10, 2000)
        ys = np.linspace(0, 15, 2000)
        X, Y = np.meshgrid(xs, ys)
        a, b, c = 1.0, 5.1 / (4 * math.pi**2), 5 / math.pi
        r, s, t = 6.0, 10.0, 1 / (8 * math.pi)
        Z = a * (Y - b * X**2 + c * X - r) ** 2 + s * (1 - t) * np.cos(X) + s
        i, j = np.unravel_index(np.argmin(Z), Z.shape)
        res = minimize(
            lambda v: p.evaluate(cfg(p, v))[0][0],
            [X[i, j], Y[i, j]],
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14},
        )
        assert res.fun == pytest.approx(0.397887, abs=1e-6)
        assert p.f_star == pytest.approx(res.fun, abs=1e-9)

    def test_constrained_problems_sign_convention(self):
        p = get_problem("townsend")
        # the known optimum must be feasible
        y, c = p.evaluate(cfg(p, [2.0052938, 1.1944509]))
        assert all(ci <= 1e-6 for ci in c)
        assert y[0] == pytest.approx(p.f_star, abs=1e-4)

    def test_mishra_optimum_feasible(self):
        p = get_problem("mishra")
        y, c = p.evaluate(cfg(p, [-3.1302468, -1.5821422]))
        assert all(ci <= 1e-6 for ci in c)
        assert y[0] == pytest.approx(p.f_star, abs=1e-4)

    def test_ackley4_constrained_origin(self):
        p = get_problem("ackley4c")
        y, c = p.evaluate(cfg(p, [0.0] * 4))
        assert y[0] == pytest.approx(0.0, abs=1e-12)
        assert c[0] == 0.0 and c[1] == pytest.approx(-5.0)

    def test_registered_optima_reverified_by_sampling_oracle(self):
        # sampling + local refinement must reproduce each stored optimum
        rng = np.random.default_rng(0)
        for name in ("branin", "beale", "hartmann6", "townsend", "mishra"):
            p = get_problem(name)
            lows = np.array([prm.low for prm in p.space.parameters])
            highs = np.array([prm.high for prm in p.space.parameters])
            X = rng.uniform(lows, highs, size=(40_000, len(lows)))
            best, best_x = math.inf, None
            for x in X:
                y, c = p.evaluator(x)
                if all(ci <= 0 for ci in c) and y[0] < best:
                    best, best_x = y[0], x
            def penalized(v, p=p, lows=lows, highs=highs):
                y, c = p.evaluator(np.clip(v, lows, highs))
                return y[0] + 1e6 * sum(max(ci, 0.0) ** 2 for ci in c)
            res = minimize(penalized, best_x, method="Nelder-Mead",
                           options={"maxiter": 4000, "xatol": 1e-10, "fatol": 1e-12})
            assert res.fun == pytest.approx(p.f_star, abs=2e-3), name

    def test_zdt2_shape(self):
        p = get_problem("zdt2")
        y, _ = p.evaluate(cfg(p, [0.5, 0.0, 0.0]))  # on the ideal front: g = 1
        assert y == (0.5, 1 - 0.25)

    def test_dtlz1_five_objectives(self):
        p = get_problem("dtlz1")
        y, _ = p.evaluate(cfg(p, [0.3, 0.4, 0.5, 0.6, 0.5, 0.5]))
        assert len(y) == 5
        # tail at 0.5 zeroes g, so the objectives sum to 0.5
        assert sum(y) == pytest.approx(0.5)


class TestMetrics:
    def test_gap_identities(self):
        assert optimality_gap(1.0, 1.0) == 0.0
        assert optimality_gap(1.5, 1.0) == 0.5

    def test_gap_series_non_increasing(self):
        series = gap_series([5.0, 3.0, 4.0, 1.0], [True] * 4, f_star=0.0)
        assert series == [5.0, 3.0, 3.0, 1.0]
        assert all(b <= a for a, b in zip(series, series[1:]))

    def test_gap_series_infeasible_prefix(self):
        series = gap_series([5.0, 3.0], [False, True], f_star=0.0)
        assert series[0] == math.inf and series[1] == 3.0

    def test_hv_difference_of_ideal_sample_small(self):
        p = get_problem("zdt2")
        ideal = p.ideal_front(10_000)
        diff = hv_difference(ideal[::100], ideal, p.ref_point)
        assert 0 <= diff <= 0.05  # discretization error of the 1% subsample

    def test_hv_difference_empty_front(self):
        p = get_problem("zdt2")
        ideal = p.ideal_front(1000)
        assert hv_difference([], ideal, p.ref_point) == pytest.approx(
            ideal_hypervolume(ideal, p.ref_point)
        )

    def test_zdt2_ideal_hv_matches_hit_count_oracle(self):
        ideal = get_problem("zdt2").ideal_front(10_000)
        ref = (11.0, 11.0)
        exact = ideal_hypervolume(ideal, ref)
        rng = np.random.default_rng(1)
        draws = 1_000_000
        lower = ideal.min(axis=0)
        box = float(np.prod(np.array(ref) - lower))
        z = rng.uniform(lower, ref, size=(draws, 2))
        # dominated iff above the f2 = 1 - f1^2 curve (within the sampled box)
        hits = z[:, 1] >= 1.0 - z[:, 0] ** 2
        est = hits.mean() * box
        se = hits.std(ddof=1) / math.sqrt(draws) * box
        assert abs(exact - est) <= 3 * se + 1e-3


class TestRunner:
    def test_random_run_cardinality_and_roundtrip(self, tmp_path):
        results = run_experiment(
            "branin", "random", 20, seeds=[0, 1, 2], out_dir=tmp_path
        )
        files = sorted(tmp_path.glob("*.jsonl"))
        assert len(files) == 3
        for path, result in zip(files, results):
            assert len(result.trials) == 20
            assert RunResult.from_lines(path.read_text()) == result
        assert (tmp_path / "branin__random__sequential__summary.csv").exists()

    def test_double_budget_random_definition(self, tmp_path):
        plain = run_single(get_problem("branin"), "random", 40, seed=5)
        doubled = run_single(get_problem("branin"), "2xrandom", 20, seed=5)
        assert len(doubled.metric_series) == 20
        assert doubled.final_metric == pytest.approx(plain.metric_series[-1])

    def test_deterministic_sequential_runs(self, tmp_path):
        a = run_single(get_problem("branin"), "random", 15, seed=3)
        b = run_single(get_problem("branin"), "random", 15, seed=3)
        assert a.metric_series == b.metric_series
        assert [t.config for t in a.trials] == [t.config for t in b.trials]

    def test_constrained_problem_finds_feasible(self):
        wins = 0
        for seed in range(3):
            res = run_single(get_problem("townsend"), "auto", 25, seed=seed)
            feasible = [
                t for t in res.trials if all(c <= 0 for c in t.constraints)
            ]
            wins += bool(feasible)
        assert wins == 3

    def test_multi_objective_run(self):
        res = run_single(get_problem("zdt2"), "random", 15, seed=0)
        assert res.metric_name == "hv_difference"
        assert len(res.metric_series) == 15
        assert all(b <= a + 1e-12 for a, b in zip(res.metric_series, res.metric_series[1:]))


class TestCLI:
    def test_run_and_report(self, tmp_path, capsys):
        out = tmp_path / "results"
        code = bench_main(
            [
                "run",
                "--problem",
                "branin",
                "--algo",
                "random",
                "--n",
                "10",
                "--seeds",
                "2",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert len(list(out.glob("*.jsonl"))) == 2
        report_path = tmp_path / "report.csv"
        code = bench_main(
            ["report", "--in", str(out), "--format", "csv", "--out", str(report_path)]
        )
        assert code == 0
        lines = report_path.read_text().strip().splitlines()
        assert lines[0] == "trial,mean,std,n_seeds,n_feasible"
        assert len(lines) == 11

    def test_report_empty_dir_fails(self, tmp_path):
        assert bench_main(["report", "--in", str(tmp_path)]) == 1
