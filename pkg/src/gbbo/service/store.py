"""Task database: append-only per-task observation logs plus a master snapshot.

Every acknowledged write is flushed and fsync'd before the caller sees the
ack, so replaying a log after a crash reproduces exactly the acknowledged
prefix.  Trial state is the fold of its log records (last record wins).
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

__all__ = ["TaskStore", "TrialRecord"]


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    config: dict[str, Any]
    objectives: list[float]
    constraints: list[float]
    state: str
    elapsed_s: float
    ts: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "trial_id": self.trial_id,
                "config": self.config,
                "objectives": self.objectives,
                "constraints": self.constraints,
                "state": self.state,
                "elapsed_s": self.elapsed_s,
                "ts": self.ts,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        doc = json.loads(line)
        return cls(
            trial_id=doc["trial_id"],
            config=doc["config"],
            objectives=list(doc["objectives"]),
            constraints=list(doc["constraints"]),
            state=doc["state"],
            elapsed_s=doc["elapsed_s"],
            ts=doc["ts"],
        )


def _atomic_write(path: Path, payload: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class TaskStore:
    """Filesystem-backed task database."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        (self.root / "tasks").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _task_dir(self, task_id: str) -> Path:
        return self.root / "tasks" / task_id

    # -- task metadata ------------------------------------------------------

    def create_task(self, task_id: str, tdl_text: str, meta: dict[str, Any]) -> None:
        tdir = self._task_dir(task_id)
        if tdir.exists():
            raise FileExistsError(f"task {task_id} already exists")
        tdir.mkdir(parents=True)
        (tdir / "log.jsonl").touch()
        _atomic_write(tdir / "tdl.json", tdl_text)
        _atomic_write(tdir / "meta.json", json.dumps(meta))

    def task_exists(self, task_id: str) -> bool:
        return self._task_dir(task_id).exists()

    def list_tasks(self) -> list[str]:
        return sorted(p.name for p in (self.root / "tasks").iterdir() if p.is_dir())

    def load_tdl(self, task_id: str) -> str:
        return (self._task_dir(task_id) / "tdl.json").read_text()

    def load_meta(self, task_id: str) -> dict[str, Any]:
        return json.loads((self._task_dir(task_id) / "meta.json").read_text())

    def update_meta(self, task_id: str, **changes: Any) -> dict[str, Any]:
        with self._lock:
            meta = self.load_meta(task_id)
            meta.update(changes)
            _atomic_write(self._task_dir(task_id) / "meta.json", json.dumps(meta))
            return meta

    # -- observation log -----------------------------------------------------

    def append_record(self, task_id: str, record: TrialRecord) -> None:
        path = self._task_dir(task_id) / "log.jsonl"
        with open(path, "a") as fh:
            fh.write(record.to_json() + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read_records(self, task_id: str) -> list[TrialRecord]:
        path = self._task_dir(task_id) / "log.jsonl"
        if not path.exists():
            return []
        records = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(TrialRecord.from_json(line))
        return records

    def fold_trials(self, task_id: str) -> dict[str, TrialRecord]:
        """Current state per trial: the last log record wins."""
        state: dict[str, TrialRecord] = {}
        for record in self.read_records(task_id):
            state[record.trial_id] = record
        return state

    # -- master snapshot ------------------------------------------------------

    def save_snapshot(self, snapshot: dict[str, Any]) -> None:
        _atomic_write(self.root / "master.json", json.dumps(snapshot))

    def load_snapshot(self) -> dict[str, Any] | None:
        path = self.root / "master.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())
