"""Scriptable simulated server for exercising the harvester.

A schedule file (JSON) maps URL paths to response scripts::

    {
      "default": {"status": 404},
      "paths": {
        "/a.pdf": {"status": 200, "content_type": "application/pdf", "delay": 0.2},
        "/flaky.pdf": {"responses": [
            {"status": 429, "headers": {"Retry-After": "3"}},
            {"status": 200, "content_type": "application/pdf"}
        ]}
      }
    }

``responses`` is consumed one entry per request (the last entry repeats).
The schedule can be served two ways: in-process as a transport callable
(used by the test harness, with an injectable clock), or as a real HTTP
server on localhost.
"""
from __future__ import annotations

import base64
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit

PDF_BODY = b"%PDF-1.4\n%simulated\n%%EOF\n"


def load_schedule(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _script_for(schedule: dict, path: str) -> dict:
    return schedule.get("paths", {}).get(path, schedule.get("default", {"status": 404}))


def _nth_response(script: dict, n: int) -> dict:
    responses = script.get("responses")
    if responses:
        return responses[min(n, len(responses) - 1)]
    return script


def _response_parts(resp: dict) -> tuple[int, dict, bytes]:
    status = int(resp.get("status", 200))
    headers = {k.lower(): str(v) for k, v in (resp.get("headers") or {}).items()}
    if "content_type" in resp:
        headers["content-type"] = resp["content_type"]
    if "body_b64" in resp:
        body = base64.b64decode(resp["body_b64"])
    elif "body" in resp:
        body = resp["body"].encode("utf-8")
    elif headers.get("content-type") == "application/pdf":
        body = PDF_BODY
    else:
        body = b""
    return status, headers, body


class SimulatedTransport:
    """In-process transport over a schedule; records politeness observables.

    Tracks, per domain, the peak number of concurrent in-flight requests and
    the issue timestamp and status of every request (clock time).
    """

    def __init__(self, schedule: dict, clock=None):
        self.schedule = schedule
        self.clock = clock
        self._lock = threading.Lock()
        self._counters: dict[str, int] = {}
        self._inflight: dict[str, int] = {}
        self.peak_inflight: dict[str, int] = {}
        self.requests: list[dict] = []

    def __call__(self, url: str, timeout: float = 30.0) -> tuple[int, dict, bytes]:
        parts = urlsplit(url)
        domain = f"{parts.scheme}://{parts.netloc}"
        path = parts.path or "/"
        now = self.clock.now() if self.clock else time.monotonic()
        with self._lock:
            n = self._counters.get(path, 0)
            self._counters[path] = n + 1
            self._inflight[domain] = self._inflight.get(domain, 0) + 1
            self.peak_inflight[domain] = max(
                self.peak_inflight.get(domain, 0), self._inflight[domain]
            )
        try:
            resp = _nth_response(_script_for(self.schedule, path), n)
            status, headers, body = _response_parts(resp)
            delay = float(resp.get("delay", 0.0))
            if delay:
                if self.clock:
                    self.clock.sleep(delay)
                else:
                    time.sleep(delay)
            with self._lock:
                self.requests.append(
                    {"domain": domain, "path": path, "time": now,
                     "status": status, "delay": delay,
                     "retry_after": headers.get("retry-after")}
                )
            return status, headers, body
        finally:
            with self._lock:
                self._inflight[domain] -= 1


class _ScheduleHandler(BaseHTTPRequestHandler):
    schedule: dict = {}
    counters: dict = {}
    counters_lock = threading.Lock()

    def do_GET(self):
        with self.counters_lock:
            n = self.counters.get(self.path, 0)
            self.counters[self.path] = n + 1
        resp = _nth_response(_script_for(self.schedule, self.path), n)
        status, headers, body = _response_parts(resp)
        delay = float(resp.get("delay", 0.0))
        if delay:
            time.sleep(delay)
        self.send_response(status)
        for k, v in headers.items():
            self.send_header(k, v)
        self.send_header("content-length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        pass


class SimulatedServer:
    """Real localhost HTTP server driven by a schedule; use as context manager."""

    def __init__(self, schedule: dict, port: int = 0):
        handler = type("Handler", (_ScheduleHandler,), {
            "schedule": schedule, "counters": {}, "counters_lock": threading.Lock(),
        })
        self.httpd = ThreadingHTTPServer(("127.0.0.1", port), handler)
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()

    def serve_forever(self):
        self._thread.start()
        self._thread.join()
