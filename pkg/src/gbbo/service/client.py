"""Worker-side client: talks to a service over HTTP or in-process.

With `anonymize=True` the client strips parameter names and value semantics
from the task description before it leaves the process, keeps the codec
locally, and undoes the transform on every received configuration, so no
original name or range ever appears on the wire.
"""

from __future__ import annotations

import json
from typing import Any

from ..space import (
    Configuration,
    PrivacyCodec,
    TaskSpec,
    anonymize,
    parse_task,
    task_to_json,
)
from .core import Service, ServiceError

__all__ = ["WorkerClient"]


class WorkerClient:
    def __init__(
        self,
        service: Service | None = None,
        base_url: str | None = None,
        worker_id: str = "worker-0",
        anonymize_tasks: bool = False,
    ) -> None:
        if (service is None) == (base_url is None):
            raise ValueError("provide exactly one of service or base_url")
        self._service = service
        self._base_url = base_url.rstrip("/") if base_url else None
        self.worker_id = worker_id
        self.anonymize_tasks = anonymize_tasks
        self._codecs: dict[str, PrivacyCodec] = {}
        if base_url:
            import requests

            self._http = requests.Session()

    # -- transport -------------------------------------------------------------

    def _request(self, method: str, path: str, *, body: Any = None, raw_body: str | None = None) -> dict:
        if self._service is not None:
            return self._inproc(method, path, body=body, raw_body=raw_body)
        url = f"{self._base_url}{path}"
        if method == "GET":
            resp = self._http.get(url)
        else:
            data = raw_body if raw_body is not None else json.dumps(body or {})
            resp = self._http.post(url, data=data.encode("utf-8"))
        doc = resp.json()
        if resp.status_code >= 400:
            raise ServiceError(resp.status_code, doc.get("error", resp.text))
        return doc

    def _inproc(self, method: str, path: str, *, body: Any = None, raw_body: str | None = None) -> dict:
        service = self._service
        parts = path.split("?")[0].strip("/").split("/")
        query = dict(
            kv.split("=", 1) for kv in (path.split("?")[1].split("&") if "?" in path else [])
        )
        if parts == ["v1", "task"] and method == "POST":
            return service.create_task(raw_body or "")
        if parts == ["v1", "health"]:
            return service.health()
        task_id, op = parts[2], parts[3]
        if op == "register":
            return service.register(task_id, body["worker_id"])
        if op == "suggest":
            return service.suggest(task_id, query.get("worker_id", ""))
        if op == "update":
            return service.update(
                task_id,
                body["trial_id"],
                body.get("objectives"),
                body.get("constraints"),
                body.get("trial_info"),
            )
        if op == "early_stop":
            return service.early_stop(task_id, query.get("trial_id", ""), float(query["best"]))
        if op == "extrapolate":
            return service.extrapolate(task_id)
        if op == "history":
            return service.history(task_id)
        raise ServiceError(404, f"no route for {method} {path}")

    # -- API ---------------------------------------------------------------------

    def create_task(self, tdl_text: str) -> str:
        if self.anonymize_tasks:
            spec = parse_task(tdl_text)
            anon_space, codec = anonymize(spec.space)
            anon_spec = TaskSpec(
                space=anon_space,
                number_of_trials=spec.number_of_trials,
                time_budget=spec.time_budget,
                task_type=spec.task_type,
                parallel_strategy=spec.parallel_strategy,
                worker_num=spec.worker_num,
                use_history=spec.use_history,
                num_objectives=spec.num_objectives,
                num_constraints=spec.num_constraints,
                ref_point=spec.ref_point,
                algorithm=spec.algorithm,
                seed=spec.seed,
            )
            tdl_text = task_to_json(anon_spec)
            doc = self._request("POST", "/v1/task", raw_body=tdl_text)
            self._codecs[doc["global_task_id"]] = codec
            return doc["global_task_id"]
        doc = self._request("POST", "/v1/task", raw_body=tdl_text)
        return doc["global_task_id"]

    def register(self, task_id: str) -> dict:
        return self._request(
            "POST", f"/v1/task/{task_id}/register", body={"worker_id": self.worker_id}
        )

    def suggest(self, task_id: str) -> tuple[Configuration, str, bool]:
        doc = self._request(
            "GET", f"/v1/task/{task_id}/suggest?worker_id={self.worker_id}"
        )
        config = Configuration.from_dict(doc["config"])
        codec = self._codecs.get(task_id)
        if codec is not None:
            config = codec.decode_config(config)
        return config, doc["trial_id"], bool(doc.get("fallback", False))

    def update(
        self,
        task_id: str,
        trial_id: str,
        objectives: list,
        constraints: list | None = None,
        elapsed_s: float | None = None,
    ) -> dict:
        trial_info = {} if elapsed_s is None else {"elapsed_s": elapsed_s}
        return self._request(
            "POST",
            f"/v1/task/{task_id}/update",
            body={
                "trial_id": trial_id,
                "objectives": objectives,
                "constraints": constraints or [],
                "trial_info": trial_info,
            },
        )

    def early_stop(self, task_id: str, trial_id: str, best_so_far: float) -> bool:
        doc = self._request(
            "GET",
            f"/v1/task/{task_id}/early_stop?trial_id={trial_id}&best={best_so_far}",
        )
        return bool(doc["stop"])

    def extrapolate(self, task_id: str) -> dict:
        return self._request("GET", f"/v1/task/{task_id}/extrapolate")

    def history(self, task_id: str) -> dict:
        return self._request("GET", f"/v1/task/{task_id}/history")

    def health(self) -> dict:
        return self._request("GET", "/v1/health")
