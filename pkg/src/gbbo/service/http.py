"""REST layer over the service facade (JSON over HTTP, UTF-8)."""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any
from urllib.parse import parse_qs, urlparse

from .core import Service, ServiceError

__all__ = ["serve", "start_http_server"]

_TASK_ROUTE = re.compile(r"^/v1/task/(?P<task_id>[^/]+)/(?P<op>[a-z_]+)$")


def _make_handler(service: Service):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _reply(self, code: int, payload: dict[str, Any]) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> dict[str, Any]:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length).decode("utf-8") if length else "{}"
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ServiceError(400, f"invalid JSON body: {exc}") from exc
            if not isinstance(doc, dict):
                raise ServiceError(400, "body must be a JSON object")
            return doc

        def _dispatch(self, method: str) -> None:
            try:
                parsed = urlparse(self.path)
                query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
                self._route(method, parsed.path, query)
            except ServiceError as exc:
                self._reply(exc.code, {"error": exc.message})
            except Exception as exc:  # pragma: no cover - defensive
                self._reply(500, {"error": f"internal error: {exc}"})

        def _route(self, method: str, path: str, query: dict[str, str]) -> None:
            if method == "POST" and path == "/v1/task":
                length = int(self.headers.get("Content-Length") or 0)
                tdl_text = self.rfile.read(length).decode("utf-8")
                self._reply(200, service.create_task(tdl_text))
                return
            if method == "GET" and path == "/v1/health":
                self._reply(200, service.health())
                return
            match = _TASK_ROUTE.match(path)
            if not match:
                raise ServiceError(404, f"no route for {path}")
            task_id, op = match.group("task_id"), match.group("op")
            if method == "POST" and op == "register":
                body = self._body()
                self._reply(200, service.register(task_id, str(body.get("worker_id", ""))))
            elif method == "GET" and op == "suggest":
                worker_id = query.get("worker_id", "")
                self._reply(200, service.suggest(task_id, worker_id))
            elif method == "POST" and op == "update":
                body = self._body()
                self._reply(
                    200,
                    service.update(
                        task_id,
                        str(body.get("trial_id", "")),
                        body.get("objectives"),
                        body.get("constraints"),
                        body.get("trial_info"),
                    ),
                )
            elif method == "GET" and op == "early_stop":
                try:
                    best = float(query["best"])
                except (KeyError, ValueError):
                    raise ServiceError(400, "early_stop needs trial_id and numeric best")
                self._reply(200, service.early_stop(task_id, query.get("trial_id", ""), best))
            elif method == "GET" and op == "extrapolate":
                self._reply(200, service.extrapolate(task_id))
            elif method == "GET" and op == "history":
                self._reply(200, service.history(task_id))
            else:
                raise ServiceError(404, f"no route for {method} {path}")

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

    return Handler


def start_http_server(
    service: Service, host: str = "127.0.0.1", port: int = 0
) -> tuple[ThreadingHTTPServer, threading.Thread]:
    """Start the REST endpoint in a daemon thread; returns (server, thread)."""
    httpd = ThreadingHTTPServer((host, port), _make_handler(service))
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    return httpd, thread


def serve(service: Service, host: str, port: int) -> None:
    """Run the REST endpoint in the foreground, heartbeating local servers."""
    stop = threading.Event()

    def beat() -> None:
        while not stop.is_set():
            service.heartbeat_all()
            stop.wait(service.config.heartbeat_interval)

    beater = threading.Thread(target=beat, daemon=True)
    beater.start()
    httpd = ThreadingHTTPServer((host, port), _make_handler(service))
    try:
        httpd.serve_forever()
    finally:
        stop.set()
        httpd.server_close()
