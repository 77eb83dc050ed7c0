"""Service master and suggestion servers.

The master owns the server registry, task assignment (least-loaded live
server), heartbeat liveness, and failover; suggestion servers compute
suggestions for their assigned tasks.  All durable state lives in the task
store, so a task can move between servers freely: the next server replays
the observation log and, because the advisor is a pure function of
(spec, history, seed), reproduces exactly the suggestions the old server
would have made.
"""

from __future__ import annotations

import math
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .. import advisor as adv
from ..acquisition import ParetoFront, hypervolume
from ..advisor import AdvisorError, History, Observation, derive_seed
from ..extrapolation import (
    CostStats,
    MCMCConfig,
    PerfCurve,
    advise_min_budget,
    advise_min_workers,
    fit_curve_posterior,
    prob_improvement,
    advice_delta,
    should_stop_early,
)
from ..space import Configuration, TaskParseError, TaskSpec, parse_task, task_to_json
from ..transfer import build_transfer_advisor
from .store import TaskStore, TrialRecord

__all__ = ["Service", "ServiceConfig", "ServiceError", "ServiceMaster", "SuggestionServer"]

ACTIVE = "active"
FINISHED = "finished"


class ServiceError(Exception):
    """Operation failure carrying an HTTP-style status code."""

    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass(frozen=True)
class ServiceConfig:
    heartbeat_interval: float = 2.0
    heartbeat_timeout: float = 10.0
    early_stop_rule: str = "median"
    early_stop_min_history: int = 5
    straggler_factor: float = 10.0
    extrapolate_mcmc: MCMCConfig = field(default_factory=MCMCConfig)


@dataclass
class ServerEntry:
    server_id: str
    address: str
    last_heartbeat: float
    alive: bool = True
    killed: bool = False  # administratively crashed; heartbeats are ignored


class _TaskRuntime:
    """Soft per-task state on one server (lock plus unclaimed sync slots)."""

    def __init__(self) -> None:
        self.cond = threading.Condition()
        self.sync_queue: list[Configuration] = []


def _spec_from_store(store: TaskStore, task_id: str) -> TaskSpec:
    return parse_task(store.load_tdl(task_id))


def _task_seed(spec: TaskSpec) -> int:
    if spec.seed is not None:
        return spec.seed
    return derive_seed("task", task_to_json(spec))


def _replay(
    store: TaskStore, task_id: str, spec: TaskSpec
) -> tuple[History, int, list[TrialRecord]]:
    """History (completed in completion order), created-trial count, raw records."""
    records = store.read_records(task_id)
    state: dict[str, TrialRecord] = {}
    completed: list[Observation] = []
    for rec in records:
        state[rec.trial_id] = rec
        if rec.state == adv.COMPLETED:
            completed.append(
                Observation(
                    config=Configuration.from_dict(rec.config),
                    objectives=tuple(rec.objectives),
                    constraints=tuple(rec.constraints),
                    trial_state=adv.COMPLETED,
                    elapsed=rec.elapsed_s,
                    timestamp=rec.ts,
                    trial_id=rec.trial_id,
                )
            )
    pending = tuple(
        Observation(
            config=Configuration.from_dict(rec.config),
            trial_state=adv.RUNNING,
            timestamp=rec.ts,
            trial_id=rec.trial_id,
        )
        for rec in state.values()
        if rec.state == adv.RUNNING
    )
    history = History(task_id=task_id, completed=tuple(completed), pending=pending)
    return history, len(state), records


def _worst_case_result(spec: TaskSpec, completed: tuple[Observation, ...]) -> tuple[list[float], list[float]]:
    """Objectives/constraints recorded for a failed evaluation: the worst seen
    per dimension (so the surrogate avoids the region), +1 per constraint."""
    if completed:
        Y = np.array([o.objectives for o in completed], dtype=float)
        objectives = [float(v) for v in Y.max(axis=0)]
    else:
        objectives = [1.0] * spec.num_objectives
    return objectives, [1.0] * spec.num_constraints


class SuggestionServer:
    """Computes suggestions for the tasks the master routes to it."""

    def __init__(
        self,
        server_id: str,
        store: TaskStore,
        clock: Callable[[], float] = time.time,
        config: ServiceConfig | None = None,
    ) -> None:
        self.server_id = server_id
        self.store = store
        self.clock = clock
        self.config = config or ServiceConfig()
        self._tasks: dict[str, _TaskRuntime] = {}
        self._tasks_lock = threading.Lock()

    def _runtime(self, task_id: str) -> _TaskRuntime:
        with self._tasks_lock:
            if task_id not in self._tasks:
                self._tasks[task_id] = _TaskRuntime()
            return self._tasks[task_id]

    # -- helpers -------------------------------------------------------------

    def _check_finished(self, task_id: str, spec: TaskSpec, history: History) -> bool:
        meta = self.store.load_meta(task_id)
        if meta.get("status") == FINISHED:
            return True
        over_trials = len(history.completed) >= spec.number_of_trials
        over_budget = (
            math.isfinite(spec.time_budget)
            and self.clock() - meta.get("created_at", self.clock()) >= spec.time_budget
        )
        if over_trials or over_budget:
            self.store.update_meta(task_id, status=FINISHED)
            return True
        return False

    def _source_histories(self, task_id: str, spec: TaskSpec) -> list[History]:
        """Finished tasks over the same space usable as transfer sources."""
        signature = spec.space.signature()
        sources = []
        for other in self.store.list_tasks():
            if other == task_id:
                continue
            try:
                other_spec = _spec_from_store(self.store, other)
            except (TaskParseError, FileNotFoundError):
                continue
            if (
                other_spec.space.signature() == signature
                and other_spec.num_objectives == spec.num_objectives
                and self.store.load_meta(other).get("status") == FINISHED
            ):
                history, _, _ = _replay(self.store, other, other_spec)
                if len(history.completed) >= 2:
                    sources.append(history)
        return sources

    def _compute_one(
        self, spec: TaskSpec, history: History, seed: int, task_id: str
    ) -> tuple[Configuration, bool]:
        try:
            if spec.use_history:
                sources = self._source_histories(task_id, spec)
                if sources:
                    advisor = build_transfer_advisor(sources, spec)
                    return advisor.suggest(history, seed), False
            return adv.suggest(spec, history, seed), False
        except AdvisorError:
            used = adv._used_vectors(spec, history)
            return adv._fresh_random(spec, used, derive_seed("fallback", seed)), True

    def _create_trial(
        self, task_id: str, config: Configuration, n_created: int
    ) -> str:
        trial_id = f"t{n_created:06d}"
        self.store.append_record(
            task_id,
            TrialRecord(
                trial_id=trial_id,
                config=config.as_dict(),
                objectives=[],
                constraints=[],
                state=adv.RUNNING,
                elapsed_s=0.0,
                ts=self.clock(),
            ),
        )
        return trial_id

    def _timeout_stragglers(self, task_id: str, spec: TaskSpec) -> bool:
        """Force-complete sync-mode trials running far beyond the typical cost."""
        history, _, _ = _replay(self.store, task_id, spec)
        if not history.completed or not history.pending:
            return False
        med_cost = float(np.median([o.elapsed for o in history.completed]))
        if med_cost <= 0:
            med_cost = 1e-3
        limit = self.config.straggler_factor * med_cost
        now = self.clock()
        fired = False
        for obs in history.pending:
            if now - obs.timestamp > limit:
                objectives, constraints = _worst_case_result(spec, history.completed)
                self.store.append_record(
                    task_id,
                    TrialRecord(
                        trial_id=obs.trial_id,
                        config=obs.config.as_dict(),
                        objectives=objectives,
                        constraints=constraints,
                        state=adv.COMPLETED,
                        elapsed_s=now - obs.timestamp,
                        ts=now,
                    ),
                )
                fired = True
        return fired

    # -- operations ----------------------------------------------------------

    def suggest(self, task_id: str, spec: TaskSpec) -> dict[str, Any]:
        runtime = self._runtime(task_id)
        with runtime.cond:
            while True:
                history, n_created, _ = _replay(self.store, task_id, spec)
                if self._check_finished(task_id, spec, history):
                    raise ServiceError(410, f"task {task_id} is finished")
                if spec.parallel_strategy != "sync" or spec.worker_num <= 1:
                    seed = derive_seed(_task_seed(spec), n_created)
                    config, fallback = self._compute_one(spec, history, seed, task_id)
                    trial_id = self._create_trial(task_id, config, n_created)
                    return {
                        "config": config.as_dict(),
                        "trial_id": trial_id,
                        "fallback": fallback,
                    }
                # synchronous batches: hand out precomputed slots, then hold
                # the barrier until every running trial reports back
                if runtime.sync_queue:
                    config = runtime.sync_queue.pop(0)
                    trial_id = self._create_trial(task_id, config, n_created)
                    return {
                        "config": config.as_dict(),
                        "trial_id": trial_id,
                        "fallback": False,
                    }
                if not history.pending:
                    seed = derive_seed(_task_seed(spec), n_created, "batch")
                    m = min(
                        spec.worker_num, spec.number_of_trials - len(history.completed)
                    )
                    try:
                        batch = adv.suggest_batch(spec, history, max(m, 1), seed)
                    except AdvisorError:
                        used = adv._used_vectors(spec, history)
                        batch = [
                            adv._fresh_random(spec, used, derive_seed("fb", seed, i))
                            for i in range(max(m, 1))
                        ]
                    runtime.sync_queue.extend(batch)
                    continue
                if self._timeout_stragglers(task_id, spec):
                    continue
                runtime.cond.wait(timeout=0.05)

    def update(
        self,
        task_id: str,
        spec: TaskSpec,
        trial_id: str,
        objectives: list,
        constraints: list,
        trial_info: dict[str, Any] | None = None,
    ) -> dict[str, Any]:
        runtime = self._runtime(task_id)
        with runtime.cond:
            history, _, _ = _replay(self.store, task_id, spec)
            trials = self.store.fold_trials(task_id)
            if trial_id not in trials:
                raise ServiceError(404, f"unknown trial {trial_id}")
            rec = trials[trial_id]
            if rec.state == adv.COMPLETED:
                raise ServiceError(409, f"trial {trial_id} already completed")

            def is_bad(v: Any) -> bool:
                return not isinstance(v, (int, float)) or not math.isfinite(float(v))

            failed = (
                objectives is None
                or len(objectives) != spec.num_objectives
                or any(is_bad(v) for v in objectives)
                or (constraints and any(is_bad(v) for v in constraints))
            )
            if failed:
                objectives, constraints = _worst_case_result(spec, history.completed)
            else:
                objectives = [float(v) for v in objectives]
                constraints = [float(v) for v in (constraints or [])]
            if len(constraints) != spec.num_constraints:
                constraints = [1.0] * spec.num_constraints
            now = self.clock()
            elapsed = float((trial_info or {}).get("elapsed_s", max(now - rec.ts, 0.0)))
            self.store.append_record(
                task_id,
                TrialRecord(
                    trial_id=trial_id,
                    config=rec.config,
                    objectives=objectives,
                    constraints=constraints,
                    state=adv.COMPLETED,
                    elapsed_s=elapsed,
                    ts=now,
                ),
            )
            runtime.cond.notify_all()
            history, _, _ = _replay(self.store, task_id, spec)
            finished = self._check_finished(task_id, spec, history)
            return {"ok": True, "failed_recorded": failed, "finished": finished}

    def early_stop(
        self, task_id: str, spec: TaskSpec, trial_id: str, best_so_far: float
    ) -> bool:
        trials = self.store.fold_trials(task_id)
        if trial_id not in trials:
            raise ServiceError(404, f"unknown trial {trial_id}")
        history, _, _ = _replay(self.store, task_id, spec)
        results = [o.objectives[0] for o in history.completed]
        return should_stop_early(
            best_so_far,
            results,
            rule=self.config.early_stop_rule,
            min_history=self.config.early_stop_min_history,
        )

    def performance_curve(self, spec: TaskSpec, history: History) -> PerfCurve:
        """Best-so-far objective (p=1) or negated dominated hypervolume (p>1)."""
        completed = history.completed
        costs = tuple(o.elapsed for o in completed)
        stamps = tuple(o.timestamp for o in completed)
        if spec.num_objectives == 1:
            z = tuple(np.minimum.accumulate([o.objectives[0] for o in completed]))
            return PerfCurve(z=z, timestamps=stamps, costs=costs)
        Y = np.array([o.objectives for o in completed], dtype=float)
        ref = adv.derive_ref_point(spec, Y)
        feasible = (
            np.array([all(c <= 0 for c in o.constraints) for o in completed])
            if spec.num_constraints
            else np.ones(len(completed), dtype=bool)
        )
        z = []
        for i in range(1, len(completed) + 1):
            pts = Y[:i][feasible[:i]]
            front = ParetoFront.from_points(pts, ref)
            z.append(-hypervolume(front))
        return PerfCurve(z=tuple(np.minimum.accumulate(z)), timestamps=stamps, costs=costs)

    def extrapolate(self, task_id: str, spec: TaskSpec) -> dict[str, Any]:
        history, _, _ = _replay(self.store, task_id, spec)
        n = len(history.completed)
        if n < 5:
            raise ServiceError(425, f"need at least 5 completed trials, have {n}")
        curve = self.performance_curve(spec, history)
        horizon = max(5 * n, n + 2)
        post = fit_curve_posterior(
            curve,
            horizon=horizon,
            mcmc=self.config.extrapolate_mcmc,
            seed=derive_seed("extrapolate", task_id, n),
        )
        cost = CostStats.from_elapsed([o.elapsed for o in history.completed])
        b_min, t_star = advise_min_budget(post, spec.worker_num, cost)
        if math.isfinite(spec.time_budget):
            n_min, _ = advise_min_workers(post, spec.time_budget, cost)
        else:
            n_min = 1
        delta = advice_delta(post)
        grid = np.unique(np.linspace(n + 1, horizon, 20).astype(int))
        prob_curve = [[int(t), prob_improvement(post, int(t), delta)] for t in grid]
        return {
            "t_star": int(t_star),
            "b_min": float(b_min),
            "n_min": int(n_min),
            "prob_curve": prob_curve,
            "completed": n,
        }


class ServiceMaster:
    """Registry, load balancing, heartbeat liveness, failover, snapshots."""

    def __init__(
        self,
        store: TaskStore,
        clock: Callable[[], float] = time.time,
        config: ServiceConfig | None = None,
    ) -> None:
        self.store = store
        self.clock = clock
        self.config = config or ServiceConfig()
        self._lock = threading.RLock()
        self.servers: dict[str, ServerEntry] = {}
        self._server_objs: dict[str, SuggestionServer] = {}
        self.assignments: dict[str, str | None] = {}
        self.workers: dict[str, list[str]] = {}
        self.seq = 0
        # a restarted master resumes from the last snapshot before any
        # server re-registers
        snapshot = store.load_snapshot()
        if snapshot is not None:
            self.seq = snapshot.get("seq", 0)
            self.assignments.update(snapshot.get("assignments", {}))
            self.workers.update(
                {k: list(v) for k, v in snapshot.get("workers", {}).items()}
            )

    # -- registry ------------------------------------------------------------

    def attach_server(self, server: SuggestionServer, address: str = "") -> None:
        with self._lock:
            self.servers[server.server_id] = ServerEntry(
                server_id=server.server_id,
                address=address or f"inproc:{server.server_id}",
                last_heartbeat=self.clock(),
            )
            self._server_objs[server.server_id] = server
            self._save_snapshot()

    def heartbeat(self, server_id: str) -> None:
        with self._lock:
            entry = self.servers.get(server_id)
            if entry is not None and not entry.killed:
                entry.last_heartbeat = self.clock()
                if not entry.alive:
                    entry.alive = True
                    self._save_snapshot()

    def check_servers(self) -> list[str]:
        """Mark heartbeat-stale servers dead and fail over their tasks."""
        newly_dead = []
        with self._lock:
            now = self.clock()
            for entry in self.servers.values():
                if entry.alive and now - entry.last_heartbeat > self.config.heartbeat_timeout:
                    entry.alive = False
                    newly_dead.append(entry.server_id)
            for server_id in newly_dead:
                self.failover(server_id)
        return newly_dead

    def kill_server(self, server_id: str) -> dict[str, Any]:
        """Administrative kill: mark dead and reassign immediately."""
        with self._lock:
            if server_id not in self.servers:
                raise ServiceError(404, f"unknown server {server_id}")
            self.servers[server_id].alive = False
            self.servers[server_id].killed = True
            return self.failover(server_id)

    def _live_servers(self) -> list[str]:
        return [s.server_id for s in self.servers.values() if s.alive]

    def _load(self, server_id: str) -> int:
        return sum(
            1
            for task, assigned in self.assignments.items()
            if assigned == server_id
            and self.store.load_meta(task).get("status") != FINISHED
        )

    def _least_loaded(self) -> str | None:
        live = self._live_servers()
        if not live:
            return None
        return min(live, key=lambda s: (self._load(s), s))

    def failover(self, dead_server_id: str) -> dict[str, Any]:
        """Reassign the dead server's tasks; park them if nobody is alive."""
        with self._lock:
            reassigned: dict[str, str] = {}
            parked: list[str] = []
            for task, assigned in list(self.assignments.items()):
                if assigned != dead_server_id:
                    continue
                target = self._least_loaded()
                self.assignments[task] = target
                if target is None:
                    parked.append(task)
                else:
                    reassigned[task] = target
            self._save_snapshot()
            return {"reassigned": reassigned, "parked": parked}

    # -- snapshot -------------------------------------------------------------

    def _save_snapshot(self) -> None:
        self.seq += 1
        self.store.save_snapshot(
            {
                "seq": self.seq,
                "servers": {s.server_id: s.address for s in self.servers.values()},
                "assignments": dict(self.assignments),
                "workers": {k: list(v) for k, v in self.workers.items()},
            }
        )

    def recover(self) -> None:
        """Repair assignments after a restart: reassign tasks whose server
        did not come back, preserving everything else from the snapshot."""
        with self._lock:
            changed = False
            for task, assigned in list(self.assignments.items()):
                if assigned is not None and assigned not in self.servers:
                    self.assignments[task] = None
                    changed = True
            for task, assigned in list(self.assignments.items()):
                if assigned is None:
                    target = self._least_loaded()
                    if target is not None:
                        self.assignments[task] = target
                        changed = True
            if changed:
                self._save_snapshot()

    # -- task lifecycle --------------------------------------------------------

    def create_task(self, tdl_text: str) -> str:
        try:
            spec = parse_task(tdl_text)
        except TaskParseError as exc:
            raise ServiceError(400, f"invalid task description: {exc}") from exc
        with self._lock:
            target = self._least_loaded()
            if target is None:
                raise ServiceError(503, "no live suggestion servers")
            task_id = f"task-{uuid.uuid4().hex[:12]}"
            self.store.create_task(
                task_id,
                tdl_text,
                {
                    "status": ACTIVE,
                    "created_at": self.clock(),
                    "assigned_server": target,
                },
            )
            self.assignments[task_id] = target
            self.workers[task_id] = []
            self._save_snapshot()
            return task_id

    def register(self, task_id: str, worker_id: str) -> dict[str, Any]:
        self._require_task(task_id)
        with self._lock:
            bound = self.workers.setdefault(task_id, [])
            if worker_id not in bound:
                bound.append(worker_id)
                self._save_snapshot()
            return {"task_id": task_id, "worker_id": worker_id, "registered": True}

    def _require_task(self, task_id: str) -> None:
        if not self.store.task_exists(task_id):
            raise ServiceError(404, f"unknown task {task_id}")

    def route(self, task_id: str) -> SuggestionServer:
        """Server responsible for a task, failing over dead assignments."""
        self._require_task(task_id)
        with self._lock:
            # in-process servers live exactly as long as this process does
            for server_id in self._server_objs:
                self.heartbeat(server_id)
            self.check_servers()
            assigned = self.assignments.get(task_id)
            entry = self.servers.get(assigned) if assigned else None
            if entry is None or not entry.alive:
                target = self._least_loaded()
                if target is None:
                    raise ServiceError(503, "no live suggestion servers")
                self.assignments[task_id] = target
                self._save_snapshot()
                assigned = target
            return self._server_objs[assigned]

    def require_registered(self, task_id: str, worker_id: str) -> None:
        if worker_id not in self.workers.get(task_id, []):
            raise ServiceError(400, f"worker {worker_id!r} not registered for {task_id}")


class Service:
    """Facade bundling the master and in-process suggestion servers."""

    def __init__(
        self,
        db_dir: str,
        n_servers: int = 1,
        clock: Callable[[], float] = time.time,
        config: ServiceConfig | None = None,
    ) -> None:
        self.config = config or ServiceConfig()
        self.store = TaskStore(db_dir)
        self.clock = clock
        self.master = ServiceMaster(self.store, clock, self.config)
        for i in range(n_servers):
            self.master.attach_server(
                SuggestionServer(f"server-{i}", self.store, clock, self.config)
            )
        self.master.recover()

    # -- REST-facing operations -------------------------------------------------

    def create_task(self, tdl_text: str) -> dict[str, Any]:
        return {"global_task_id": self.master.create_task(tdl_text)}

    def register(self, task_id: str, worker_id: str) -> dict[str, Any]:
        return self.master.register(task_id, worker_id)

    def suggest(self, task_id: str, worker_id: str) -> dict[str, Any]:
        self.master._require_task(task_id)
        self.master.require_registered(task_id, worker_id)
        spec = _spec_from_store(self.store, task_id)
        server = self.master.route(task_id)
        return server.suggest(task_id, spec)

    def update(
        self,
        task_id: str,
        trial_id: str,
        objectives: list,
        constraints: list | None = None,
        trial_info: dict[str, Any] | None = None,
    ) -> dict[str, Any]:
        self.master._require_task(task_id)
        spec = _spec_from_store(self.store, task_id)
        server = self.master.route(task_id)
        return server.update(
            task_id, spec, trial_id, objectives, constraints or [], trial_info
        )

    def early_stop(self, task_id: str, trial_id: str, best_so_far: float) -> dict[str, Any]:
        self.master._require_task(task_id)
        spec = _spec_from_store(self.store, task_id)
        server = self.master.route(task_id)
        return {"stop": server.early_stop(task_id, spec, trial_id, best_so_far)}

    def extrapolate(self, task_id: str) -> dict[str, Any]:
        self.master._require_task(task_id)
        spec = _spec_from_store(self.store, task_id)
        server = self.master.route(task_id)
        return server.extrapolate(task_id, spec)

    def history(self, task_id: str) -> dict[str, Any]:
        self.master._require_task(task_id)
        records = self.store.read_records(task_id)
        return {
            "task_id": task_id,
            "records": [
                {
                    "trial_id": r.trial_id,
                    "config": r.config,
                    "objectives": r.objectives,
                    "constraints": r.constraints,
                    "state": r.state,
                    "elapsed_s": r.elapsed_s,
                    "ts": r.ts,
                }
                for r in records
            ],
        }

    def health(self) -> dict[str, Any]:
        with self.master._lock:
            self.master.check_servers()
            parked = [t for t, s in self.master.assignments.items() if s is None]
            return {
                "status": "ok" if self.master._live_servers() else "degraded",
                "servers": [
                    {
                        "server_id": e.server_id,
                        "alive": e.alive,
                        "load": self.master._load(e.server_id),
                    }
                    for e in self.master.servers.values()
                ],
                "parked_tasks": parked,
            }

    def heartbeat_all(self) -> None:
        """Refresh heartbeats for all in-process servers (they share our fate)."""
        for server_id in list(self.master._server_objs):
            self.master.heartbeat(server_id)
