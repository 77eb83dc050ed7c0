import json
import math
import threading
import time

import numpy as np
import pytest

import gbbo.advisor as adv
from gbbo.service import (
    Service,
    ServiceConfig,
    ServiceError,
    WorkerClient,
    start_http_server,
)
from gbbo.space import Configuration

BASIC_TASK = {
    "parameter": {
        "x1": {"type": "float", "bound": [0, 1]},
        "x2": {"type": "float", "bound": [0, 1]},
    },
    "number_of_trials": 50,
    "task_type": "so",
    "parallel_strategy": "async",
    "worker_num": 2,
    "seed": 7,
    "algorithm": "random",
}


class FakeClock:
    def __init__(self, start=1000.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, dt):
        self.now += dt


def make_service(tmp_path, n_servers=1, clock=None, **cfg):
    config = ServiceConfig(**cfg) if cfg else ServiceConfig()
    return Service(str(tmp_path / "db"), n_servers=n_servers, clock=clock or time.time, config=config)


def task_text(**overrides):
    doc = dict(BASIC_TASK)
    doc.update(overrides)
    return json.dumps(doc)


def run_trial(service, task_id, worker="w0", value=None):
    out = service.suggest(task_id, worker)
    y = value if value is not None else out["config"]["x1"]
    service.update(task_id, out["trial_id"], [y])
    return out


class TestCreateTask:
    def test_returns_unique_ids(self, tmp_path):
        service = make_service(tmp_path)
        a = service.create_task(task_text())["global_task_id"]
        b = service.create_task(task_text())["global_task_id"]
        assert a and b and a != b

    def test_malformed_tdl_is_400(self, tmp_path):
        service = make_service(tmp_path)
        with pytest.raises(ServiceError) as err:
            service.create_task("{not json")
        assert err.value.code == 400

    def test_no_live_servers_is_503(self, tmp_path):
        service = make_service(tmp_path, n_servers=1)
        service.master.kill_server("server-0")
        with pytest.raises(ServiceError) as err:
            service.create_task(task_text())
        assert err.value.code == 503

    def test_example_task_parses(self, tmp_path, example_task_text):
        service = make_service(tmp_path)
        out = service.create_task(example_task_text)
        assert out["global_task_id"]


class TestRegister:
    def test_ack_and_idempotence(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        ack1 = service.register(tid, "w0")
        ack2 = service.register(tid, "w0")
        assert ack1["registered"] and ack2["registered"]
        assert service.master.workers[tid] == ["w0"]

    def test_unknown_task_is_404(self, tmp_path):
        service = make_service(tmp_path)
        with pytest.raises(ServiceError) as err:
            service.register("nope", "w0")
        assert err.value.code == 404


class TestSuggestUpdate:
    def test_first_suggestion_and_update(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        service.register(tid, "w0")
        out = service.suggest(tid, "w0")
        assert set(out) == {"config", "trial_id", "fallback"}
        ack = service.update(tid, out["trial_id"], [0.5])
        assert ack["ok"]
        records = service.history(tid)["records"]
        assert len(records) == 2  # Running + Completed
        assert records[-1]["state"] == "Completed"

    def test_unregistered_worker_rejected(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        with pytest.raises(ServiceError) as err:
            service.suggest(tid, "ghost")
        assert err.value.code == 400

    def test_concurrent_async_suggestions_distinct(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        service.register(tid, "w0")
        service.register(tid, "w1")
        results = []

        def worker(w):
            results.append(service.suggest(tid, w))

        threads = [threading.Thread(target=worker, args=(f"w{i}",)) for i in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results[0]["trial_id"] != results[1]["trial_id"]
        assert results[0]["config"] != results[1]["config"]

    def test_duplicate_update_is_409(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        service.register(tid, "w0")
        out = service.suggest(tid, "w0")
        service.update(tid, out["trial_id"], [1.0])
        with pytest.raises(ServiceError) as err:
            service.update(tid, out["trial_id"], [2.0])
        assert err.value.code == 409
        assert len(service.history(tid)["records"]) == 2

    def test_unknown_trial_is_404(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        with pytest.raises(ServiceError) as err:
            service.update(tid, "zz", [1.0])
        assert err.value.code == 404

    def test_nan_objective_records_worst_observed(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        service.register(tid, "w0")
        run_trial(service, tid, value=1.5)
        run_trial(service, tid, value=3.5)
        out = service.suggest(tid, "w0")
        ack = service.update(tid, out["trial_id"], [float("nan")])
        assert ack["failed_recorded"]
        last = service.history(tid)["records"][-1]
        assert last["objectives"] == [3.5]

    def test_finished_task_is_410(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text(number_of_trials=2))["global_task_id"]
        service.register(tid, "w0")
        run_trial(service, tid)
        run_trial(service, tid)
        with pytest.raises(ServiceError) as err:
            service.suggest(tid, "w0")
        assert err.value.code == 410

    def test_pending_set_hygiene_under_concurrency(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        for i in range(8):
            service.register(tid, f"w{i}")
        outs = []
        lock = threading.Lock()

        def worker(w):
            out = service.suggest(tid, w)
            with lock:
                outs.append(out)

        threads = [threading.Thread(target=worker, args=(f"w{i}",)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        records = service.history(tid)["records"]
        running = [r for r in records if r["state"] == "Running"]
        assert len(running) == 8
        assert len({r["trial_id"] for r in running}) == 8
        # complete half, check bookkeeping
        for out in outs[:4]:
            service.update(tid, out["trial_id"], [0.1])
        trials = service.store.fold_trials(tid)
        still_running = [t for t in trials.values() if t.state == "Running"]
        assert len(still_running) == 4


class TestStopEarly:
    def test_warmup_and_median(self, tmp_path):
        service = make_service(tmp_path, early_stop_min_history=3)
        tid = service.create_task(task_text())["global_task_id"]
        service.register(tid, "w0")
        out = service.suggest(tid, "w0")
        # warm-up: not enough completed results
        assert service.early_stop(tid, out["trial_id"], 100.0) == {"stop": False}
        service.update(tid, out["trial_id"], [1.0])
        for v in (2.0, 3.0):
            run_trial(service, tid, value=v)
        probe = service.suggest(tid, "w0")
        assert service.early_stop(tid, probe["trial_id"], 5.0)["stop"] is True
        assert service.early_stop(tid, probe["trial_id"], 1.5)["stop"] is False

    def test_unknown_trial_404(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        with pytest.raises(ServiceError) as err:
            service.early_stop(tid, "zz", 1.0)
        assert err.value.code == 404


class TestExtrapolate:
    def test_too_early_is_425(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        service.register(tid, "w0")
        for _ in range(3):
            run_trial(service, tid)
        with pytest.raises(ServiceError) as err:
            service.extrapolate(tid)
        assert err.value.code == 425

    def test_flat_history_minimal_advice(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        service.register(tid, "w0")
        for _ in range(8):
            run_trial(service, tid, value=2.0)
        advice = service.extrapolate(tid)
        assert advice["n_min"] == 1
        assert advice["t_star"] == 9
        assert all(0.0 <= p <= 1.0 for _, p in advice["prob_curve"])

    def test_advice_arithmetic(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text(worker_num=4, time_budget=100))["global_task_id"]
        service.register(tid, "w0")
        for i in range(10):
            run_trial(service, tid, value=1.0 / (i + 1))
        advice = service.extrapolate(tid)
        assert advice["b_min"] >= 0
        assert advice["n_min"] >= 1


class TestFailover:
    def test_kill_one_of_two_preserves_task(self, tmp_path):
        service = make_service(tmp_path, n_servers=2)
        tid = service.create_task(task_text())["global_task_id"]
        service.register(tid, "w0")
        run_trial(service, tid)
        count_before = len(service.history(tid)["records"])
        assigned = service.master.assignments[tid]
        report = service.master.kill_server(assigned)
        assert tid in report["reassigned"]
        out = service.suggest(tid, "w0")
        assert out["trial_id"]
        assert len(service.history(tid)["records"]) == count_before + 1

    def test_kill_all_servers_is_503(self, tmp_path):
        service = make_service(tmp_path, n_servers=1)
        tid = service.create_task(task_text())["global_task_id"]
        service.register(tid, "w0")
        service.master.kill_server("server-0")
        with pytest.raises(ServiceError) as err:
            service.suggest(tid, "w0")
        assert err.value.code == 503
        assert tid in service.health()["parked_tasks"]

    def test_heartbeat_timeout_triggers_failover(self, tmp_path):
        clock = FakeClock()
        service = make_service(tmp_path, n_servers=2, clock=clock)
        tid = service.create_task(task_text())["global_task_id"]
        assigned = service.master.assignments[tid]
        other = [s for s in service.master.servers if s != assigned][0]
        clock.advance(11.0)
        service.master.heartbeat(other)  # only the other server stays alive
        dead = service.master.check_servers()
        assert assigned in dead
        assert service.master.assignments[tid] == other

    def test_master_restart_recovers_assignments(self, tmp_path):
        service = make_service(tmp_path, n_servers=2)
        tids = [service.create_task(task_text())["global_task_id"] for _ in range(4)]
        before = dict(service.master.assignments)
        # a new master process over the same database
        restarted = make_service(tmp_path, n_servers=2)
        assert dict(restarted.master.assignments) == before
        assert set(restarted.master.workers) == set(service.master.workers)

    def test_statelessness_across_migration(self, tmp_path):
        # non-random task: the suggestion actually depends on the history
        text = task_text(algorithm="auto", number_of_trials=30)
        service = make_service(tmp_path, n_servers=2)
        tid = service.create_task(text)["global_task_id"]
        service.register(tid, "w0")
        for i in range(6):
            out = service.suggest(tid, "w0")
            service.update(tid, out["trial_id"], [float((out["config"]["x1"] - 0.3) ** 2)])

        # peek at what the current server would suggest next, then roll back
        records_before = service.history(tid)["records"]
        adv._HYPER_CACHE.clear()
        peek = service.suggest(tid, "w0")
        # migrate to the other server and replay on a fresh process state
        log = tmp_path / "db" / "tasks" / tid / "log.jsonl"
        log.write_text(
            "".join(
                json.dumps(r) + "\n" for r in records_before
            )
        )
        assigned = service.master.assignments[tid]
        service.master.kill_server(assigned)
        adv._HYPER_CACHE.clear()
        replayed = service.suggest(tid, "w0")
        assert replayed["config"] == peek["config"]
        assert replayed["trial_id"] == peek["trial_id"]


class TestLoadBalance:
    def test_hundred_tasks_spread_evenly(self, tmp_path):
        service = make_service(tmp_path, n_servers=4)
        for _ in range(100):
            service.create_task(task_text())
        loads = [s["load"] for s in service.health()["servers"]]
        assert sum(loads) == 100
        assert max(loads) - min(loads) <= 1


class TestDurability:
    def test_replay_after_crash_matches_acked_prefix(self, tmp_path):
        service = make_service(tmp_path)
        tid = service.create_task(task_text())["global_task_id"]
        service.register(tid, "w0")
        acked = []
        for i in range(5):
            out = service.suggest(tid, "w0")
            service.update(tid, out["trial_id"], [float(i)])
            acked.append((out["trial_id"], float(i)))
        # simulate a crash: a brand-new process over the same database
        reborn = make_service(tmp_path)
        trials = reborn.store.fold_trials(tid)
        completed = {
            t.trial_id: t.objectives[0]
            for t in trials.values()
            if t.state == "Completed"
        }
        assert completed == dict(acked)


class TestSyncMode:
    def test_batch_and_barrier(self, tmp_path):
        clock = FakeClock()
        service = make_service(tmp_path, clock=clock)
        tid = service.create_task(
            task_text(parallel_strategy="sync", worker_num=2, number_of_trials=10)
        )["global_task_id"]
        service.register(tid, "w0")
        service.register(tid, "w1")
        a = service.suggest(tid, "w0")
        b = service.suggest(tid, "w1")
        assert a["trial_id"] != b["trial_id"]
        # barrier: a third suggest must block until both trials complete
        done = []

        def blocked():
            done.append(service.suggest(tid, "w0"))

        t = threading.Thread(target=blocked)
        t.start()
        time.sleep(0.15)
        assert not done  # still waiting at the barrier
        service.update(tid, a["trial_id"], [1.0])
        time.sleep(0.15)
        assert not done
        service.update(tid, b["trial_id"], [2.0])
        t.join(timeout=5)
        assert done and done[0]["trial_id"] not in (a["trial_id"], b["trial_id"])

    def test_straggler_times_out(self, tmp_path):
        clock = FakeClock()
        service = make_service(tmp_path, clock=clock, straggler_factor=10.0)
        tid = service.create_task(
            task_text(parallel_strategy="sync", worker_num=2, number_of_trials=20)
        )["global_task_id"]
        service.register(tid, "w0")
        service.register(tid, "w1")
        a = service.suggest(tid, "w0")
        b = service.suggest(tid, "w1")
        clock.advance(1.0)
        service.update(tid, a["trial_id"], [1.0], trial_info={"elapsed_s": 1.0})
        # b never reports; run the clock past 10x the median cost
        clock.advance(30.0)
        out = service.suggest(tid, "w0")  # releases the barrier by timing b out
        assert out["trial_id"]
        rec = service.store.fold_trials(tid)[b["trial_id"]]
        assert rec.state == "Completed"
        assert rec.objectives == [1.0]  # worst observed so far


class TestHTTP:
    def test_full_workflow_over_http(self, tmp_path):
        service = make_service(tmp_path)
        httpd, _ = start_http_server(service)
        port = httpd.server_address[1]
        client = WorkerClient(base_url=f"http://127.0.0.1:{port}", worker_id="w0")
        try:
            tid = client.create_task(task_text())
            client.register(tid)
            config, trial_id, fallback = client.suggest(tid)
            assert not fallback
            client.update(tid, trial_id, [0.25], elapsed_s=0.5)
            records = client.history(tid)["records"]
            assert records[-1]["objectives"] == [0.25]
            assert client.health()["status"] == "ok"
            assert client.early_stop(tid, trial_id_or_probe(client, tid), 100.0) in (True, False)
        finally:
            httpd.shutdown()

    def test_http_error_codes(self, tmp_path):
        service = make_service(tmp_path)
        httpd, _ = start_http_server(service)
        port = httpd.server_address[1]
        client = WorkerClient(base_url=f"http://127.0.0.1:{port}", worker_id="w0")
        try:
            with pytest.raises(ServiceError) as err:
                client.register("missing-task")
            assert err.value.code == 404
            with pytest.raises(ServiceError) as err:
                client.create_task("{broken")
            assert err.value.code == 400
        finally:
            httpd.shutdown()


def trial_id_or_probe(client, tid):
    config, trial_id, _ = client.suggest(tid)
    return trial_id


class TestPrivacy:
    def test_no_original_names_on_wire_or_disk(self, tmp_path, example_task_text):
        service = make_service(tmp_path)
        httpd, _ = start_http_server(service)
        port = httpd.server_address[1]
        client = WorkerClient(
            base_url=f"http://127.0.0.1:{port}", worker_id="w0", anonymize_tasks=True
        )
        try:
            doc = json.loads(example_task_text)
            doc.update({"algorithm": "random", "number_of_trials": 20, "seed": 1})
            tid = client.create_task(json.dumps(doc))
            client.register(tid)
            for _ in range(3):
                config, trial_id, _ = client.suggest(tid)
                # decoded config has the true names locally
                assert set(config.as_dict()) <= {"x1", "x2", "x3", "x4"}
                client.update(tid, trial_id, [1.0])
            # byte-scan everything the service ever saw or stored
            blobs = [json.dumps(client.history(tid))]
            task_dir = tmp_path / "db" / "tasks" / tid
            for path in task_dir.iterdir():
                blobs.append(path.read_text())
            for blob in blobs:
                for name in ("x1", "x2", "x3", "x4", "a1", "a2", "a3"):
                    assert f'"{name}"' not in blob
        finally:
            httpd.shutdown()
