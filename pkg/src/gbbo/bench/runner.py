"""Experiment runner: drives benchmark problems through the service client.

Each (problem, algorithm, seed) run spins up a fresh in-process service,
drives it with one or more worker threads, and writes a JSON-lines result
file.  `summarize` aggregates result files into a plot-ready CSV of
mean +/- std metric per trial.
"""

from __future__ import annotations

import csv
import json
import math
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..service import Service, ServiceError
from ..space import Configuration, TaskSpec, task_to_json
from .metrics import gap_series, hv_difference, hv_series, ideal_hypervolume
from .problems import Problem, get_problem

__all__ = ["RunResult", "run_experiment", "summarize", "write_summary_csv"]

ALGOS = ("auto", "random", "2xrandom")
MODES_HELP = "sequential | sync-N | async-N"


@dataclass(frozen=True)
class TrialRow:
    trial: int
    config: dict[str, Any]
    objectives: list[float]
    constraints: list[float]
    elapsed_s: float


@dataclass(frozen=True)
class RunResult:
    problem: str
    algo: str
    seed: int
    mode: str
    metric_name: str
    trials: tuple[TrialRow, ...]
    metric_series: tuple[float, ...]
    wall_time_s: float = 0.0

    def to_lines(self) -> str:
        header = {
            "problem": self.problem,
            "algo": self.algo,
            "seed": self.seed,
            "mode": self.mode,
            "metric_name": self.metric_name,
            "metric_series": list(self.metric_series),
            "wall_time_s": self.wall_time_s,
        }
        lines = [json.dumps(header)]
        for row in self.trials:
            lines.append(
                json.dumps(
                    {
                        "trial": row.trial,
                        "config": row.config,
                        "objectives": row.objectives,
                        "constraints": row.constraints,
                        "elapsed_s": row.elapsed_s,
                    }
                )
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_lines(cls, text: str) -> "RunResult":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = json.loads(lines[0])
        trials = tuple(
            TrialRow(
                trial=doc["trial"],
                config=doc["config"],
                objectives=doc["objectives"],
                constraints=doc["constraints"],
                elapsed_s=doc["elapsed_s"],
            )
            for doc in map(json.loads, lines[1:])
        )
        return cls(
            problem=header["problem"],
            algo=header["algo"],
            seed=header["seed"],
            mode=header["mode"],
            metric_name=header["metric_name"],
            trials=trials,
            metric_series=tuple(header["metric_series"]),
            wall_time_s=header.get("wall_time_s", 0.0),
        )

    @property
    def final_metric(self) -> float:
        return self.metric_series[-1] if self.metric_series else math.inf


def _parse_mode(mode: str) -> tuple[str, int]:
    if mode == "sequential":
        return "async", 1
    for prefix, strategy in (("sync-", "sync"), ("async-", "async")):
        if mode.startswith(prefix):
            return strategy, int(mode[len(prefix) :])
    raise ValueError(f"unknown mode {mode!r}; expected {MODES_HELP}")


def _task_text(problem: Problem, algo: str, n_trials: int, mode: str, seed: int) -> str:
    strategy, workers = _parse_mode(mode)
    spec = TaskSpec(
        space=problem.space,
        number_of_trials=n_trials,
        task_type=problem.task_type,
        parallel_strategy=strategy,
        worker_num=workers,
        num_objectives=problem.num_objectives,
        num_constraints=problem.num_constraints,
        ref_point=problem.ref_point,
        algorithm="random" if algo in ("random", "2xrandom") else "auto",
        seed=seed,
    )
    return task_to_json(spec)


def _drive_workers(
    service: Service,
    task_id: str,
    problem: Problem,
    n_workers: int,
    sim_cost: float = 0.0,
    worker_delays: dict[int, float] | None = None,
    wall_time_limit: float | None = None,
) -> None:
    worker_delays = worker_delays or {}
    start = time.time()
    for i in range(n_workers):
        service.register(task_id, f"w{i}")

    def loop(idx: int) -> None:
        worker = f"w{idx}"
        while True:
            if wall_time_limit is not None and time.time() - start >= wall_time_limit:
                return
            try:
                out = service.suggest(task_id, worker)
            except ServiceError as exc:
                if exc.code in (410, 503):
                    return
                raise
            config = Configuration.from_dict(out["config"])
            t0 = time.time()
            objectives, constraints = problem.evaluate(config)
            cost = sim_cost + worker_delays.get(idx, 0.0)
            if cost > 0:
                time.sleep(cost)
            try:
                service.update(
                    task_id,
                    out["trial_id"],
                    list(objectives),
                    list(constraints),
                    {"elapsed_s": time.time() - t0},
                )
            except ServiceError as exc:
                if exc.code in (404, 409, 410):
                    continue  # trial timed out under us or task just finished
                raise

    if n_workers == 1:
        loop(0)
    else:
        threads = [threading.Thread(target=loop, args=(i,)) for i in range(n_workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()


def _collect_result(
    service: Service,
    task_id: str,
    problem: Problem,
    algo: str,
    seed: int,
    mode: str,
    n_trials_reported: int,
    wall_time_s: float,
) -> RunResult:
    records = [
        r for r in service.history(task_id)["records"] if r["state"] == "Completed"
    ]
    rows = [
        TrialRow(
            trial=i + 1,
            config=r["config"],
            objectives=list(r["objectives"]),
            constraints=list(r["constraints"]),
            elapsed_s=r["elapsed_s"],
        )
        for i, r in enumerate(records)
    ]
    feasible = [all(c <= 0 for c in r.constraints) for r in rows]
    if problem.num_objectives == 1:
        series = gap_series([r.objectives[0] for r in rows], feasible, problem.f_star)
        metric = "optimality_gap" if problem.f_star is not None else "best_value"
    else:
        hv = hv_series([r.objectives for r in rows], feasible, problem.ref_point)
        if problem.ideal_front is not None:
            ideal = ideal_hypervolume(problem.ideal_front(10_000), problem.ref_point)
            series = [ideal - v for v in hv]
            metric = "hv_difference"
        else:
            series = hv
            metric = "hypervolume"
    if algo == "2xrandom":
        # double-budget random: report n entries, entry t = state at trial 2t
        series = [series[min(2 * (t + 1) - 1, len(series) - 1)] for t in range(n_trials_reported)]
        rows = rows[: n_trials_reported]
    return RunResult(
        problem=problem.name,
        algo=algo,
        seed=seed,
        mode=mode,
        metric_name=metric,
        trials=tuple(rows),
        metric_series=tuple(series),
        wall_time_s=wall_time_s,
    )


def run_single(
    problem: Problem,
    algo: str,
    n_trials: int,
    seed: int,
    mode: str = "sequential",
    sim_cost: float = 0.0,
    worker_delays: dict[int, float] | None = None,
    wall_time_limit: float | None = None,
    db_dir: str | None = None,
) -> RunResult:
    """One full optimization run against a fresh in-process service."""
    if algo not in ALGOS:
        raise ValueError(f"unknown algo {algo!r}; expected one of {ALGOS}")
    budget = 2 * n_trials if algo == "2xrandom" else n_trials
    strategy, workers = _parse_mode(mode)
    start = time.time()
    with tempfile.TemporaryDirectory(dir=db_dir) as tmp:
        service = Service(tmp, n_servers=1)
        task_id = service.create_task(
            _task_text(problem, algo, budget, mode, seed)
        )["global_task_id"]
        _drive_workers(
            service,
            task_id,
            problem,
            workers,
            sim_cost=sim_cost,
            worker_delays=worker_delays,
            wall_time_limit=wall_time_limit,
        )
        return _collect_result(
            service,
            task_id,
            problem,
            algo,
            seed,
            mode,
            n_trials,
            wall_time_s=time.time() - start,
        )


def run_experiment(
    problem_name: str,
    algo: str,
    n_trials: int,
    seeds: Sequence[int],
    mode: str = "sequential",
    out_dir: str | Path = "results",
    sim_cost: float = 0.0,
    worker_delays: dict[int, float] | None = None,
    wall_time_limit: float | None = None,
) -> list[RunResult]:
    """Repeat a run over seeds, writing one result file per seed plus a CSV."""
    problem = get_problem(problem_name)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in seeds:
        result = run_single(
            problem,
            algo,
            n_trials,
            seed,
            mode,
            sim_cost=sim_cost,
            worker_delays=worker_delays,
            wall_time_limit=wall_time_limit,
        )
        path = out / f"{problem_name}__{algo}__{mode}__seed{seed}.jsonl"
        path.write_text(result.to_lines())
        results.append(result)
    write_summary_csv(results, out / f"{problem_name}__{algo}__{mode}__summary.csv")
    return results


def summarize(results: Sequence[RunResult]) -> list[dict[str, Any]]:
    """Mean +/- std of the metric per trial index across seeds."""
    if not results:
        return []
    longest = max(len(r.metric_series) for r in results)
    rows = []
    for t in range(longest):
        vals = [
            r.metric_series[min(t, len(r.metric_series) - 1)]
            for r in results
            if r.metric_series
        ]
        finite = [v for v in vals if math.isfinite(v)]
        rows.append(
            {
                "trial": t + 1,
                "mean": float(np.mean(finite)) if finite else math.inf,
                "std": float(np.std(finite)) if finite else math.inf,
                "n_seeds": len(vals),
                "n_feasible": len(finite),
            }
        )
    return rows


def write_summary_csv(results: Sequence[RunResult], path: str | Path) -> None:
    rows = summarize(results)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["trial", "mean", "std", "n_seeds", "n_feasible"]
        )
        writer.writeheader()
        writer.writerows(rows)


def load_results(in_dir: str | Path) -> list[RunResult]:
    return [
        RunResult.from_lines(path.read_text())
        for path in sorted(Path(in_dir).glob("*.jsonl"))
    ]
