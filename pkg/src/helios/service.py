"""HTTP service exposing the simulator the way the physical device exposes
itself.

Endpoints:

* ``GET /api?R=&G=&B=`` - structured measurement, ``{"in": ..., "out": ...}``
* ``GET /gm?G=``        - the Green Machine (single input, 515nm out);
  HTML form for browsers, structured body otherwise
* ``GET /rgb?R=&G=&B=`` - three inputs, 10-row table in HTML
* ``GET /stats``        - experiment counts from the log
* ``GET /``             - static control-panel bundle, if configured

The HTTP layer is concurrent but every measurement passes through one
strict-FIFO critical section that owns the RNG stream and the log append,
so seeded runs replay exactly given the arrival order.  Missing query
parameters default to 0; out-of-range values clamp (mirroring the
hardware); only unparseable values earn a 400.
"""

from __future__ import annotations

import collections
import hashlib
import html
import json
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qsl, urlsplit

import numpy as np

from helios.sim import (
    CHANNELS,
    ResponseModel,
    RgbSetting,
    default_model,
    measure,
    utcnow,
)

DEFAULT_LOG_MAX_BYTES = 10_000_000


class QueueTimeout(Exception):
    """The measurement queue did not free up within the configured wait."""


class _FifoLock:
    """Mutual exclusion with strict first-come-first-served hand-off."""

    def __init__(self):
        self._state = threading.Lock()
        self._waiters = collections.deque()
        self._held = False

    def acquire(self, timeout: float) -> bool:
        with self._state:
            if not self._held and not self._waiters:
                self._held = True
                return True
            ticket = threading.Event()
            self._waiters.append(ticket)
        if ticket.wait(timeout):
            return True
        with self._state:
            try:
                self._waiters.remove(ticket)
            except ValueError:
                # release() handed the lock to us while we were timing out
                if ticket.is_set():
                    return True
            return False

    def release(self):
        with self._state:
            if self._waiters:
                self._waiters.popleft().set()   # direct hand-off, stays held
            else:
                self._held = False


class MeasurementQueue:
    """Serializes all measurements: one RNG stream, FIFO order, optional
    per-measurement latency applied inside the critical section."""

    def __init__(self, model: ResponseModel, seed: int | None = None,
                 latency_s: float = 0.0, timeout_s: float = 30.0):
        self.model = model
        self.latency_s = latency_s
        self.timeout_s = timeout_s
        self._rng = np.random.default_rng(model.seed if seed is None else seed)
        self._fifo = _FifoLock()

    def take(self, setting: RgbSetting, on_record=None):
        if not self._fifo.acquire(self.timeout_s):
            raise QueueTimeout(
                f"measurement queue busy for more than {self.timeout_s}s")
        try:
            if self.latency_s > 0:
                time.sleep(self.latency_s)
            reading = measure(self.model, setting, utcnow(), self._rng)
            if on_record is not None:
                on_record(reading)
            return reading
        finally:
            self._fifo.release()


class ExperimentLog:
    """Append-only newline-delimited record log, rotated by size.

    One JSON object per line; a crash can at worst truncate the final
    line, which readers skip.  ``stats`` and ``records`` read a snapshot
    without blocking writers.
    """

    def __init__(self, path, max_bytes: int = DEFAULT_LOG_MAX_BYTES):
        self.path = str(path)
        self.max_bytes = max_bytes
        self._lock = threading.Lock()

    def _rotated_paths(self):
        n = 1
        found = []
        while os.path.exists(f"{self.path}.{n}"):
            found.append(f"{self.path}.{n}")
            n += 1
        return found

    def append(self, record: dict) -> None:
        line = json.dumps(record) + "\n"
        with self._lock:
            if (os.path.exists(self.path)
                    and os.path.getsize(self.path) + len(line) > self.max_bytes):
                n = len(self._rotated_paths()) + 1
                os.replace(self.path, f"{self.path}.{n}")
            with open(self.path, "a") as f:
                f.write(line)

    def records(self) -> list:
        out = []
        for path in self._rotated_paths() + [self.path]:
            if not os.path.exists(path):
                continue
            with open(path) as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        out.append(json.loads(line))
                    except json.JSONDecodeError:
                        continue    # partial trailing line mid-write
        return out

    def stats(self) -> dict:
        records = self.records()
        clients = {r.get("client_id") for r in records if r.get("client_id")}
        since = records[0]["timestamp"] if records else None
        return {
            "experiments": len(records),
            "unique_clients": len(clients),
            "since": since,
        }


def _parse_setting(query: dict, allowed=("R", "G", "B")):
    """Parse R/G/B query values; missing default 0, unparseable raise."""
    values = {}
    for name in ("R", "G", "B"):
        raw = query.get(name)
        if name not in allowed:
            values[name] = 0.0
            continue
        if raw is None or raw == "":
            values[name] = 0.0
            continue
        try:
            values[name] = float(raw)
        except ValueError:
            raise ValueError(f"parameter {name} is not a number: {raw!r}")
    return RgbSetting(values["R"], values["G"], values["B"])


def api_body(setting: RgbSetting, reading) -> str:
    """The fixed wire body: ``in`` then ``out``, channels in canonical order."""
    body = {"in": setting.as_wire(), "out": reading.by_wire()}
    return json.dumps(body)


def gm_body(setting: RgbSetting, reading) -> str:
    body = {"in": {"G": setting.g},
            "out": {"515nm": reading.by_wire()["515nm"]}}
    return json.dumps(body)


_GM_PAGE = """<!doctype html>
<html><head><title>Green Machine</title></head>
<body>
<h1>Green Machine</h1>
<p>One input (the green LED level), one output (the 515nm intensity).</p>
<form method="get" action="/gm">
  <label>G <input name="G" type="number" min="0" max="1" step="0.01" value="{g}"></label>
  <button type="submit">Measure</button>
</form>
{result}
</body></html>
"""

_RGB_PAGE = """<!doctype html>
<html><head><title>RGB Machine</title></head>
<body>
<h1>RGB Machine</h1>
<p>Three inputs (R, G, B LED levels), ten spectral outputs.</p>
<form method="get" action="/rgb">
  <label>R <input name="R" type="number" min="0" max="1" step="0.01" value="{r}"></label>
  <label>G <input name="G" type="number" min="0" max="1" step="0.01" value="{g}"></label>
  <label>B <input name="B" type="number" min="0" max="1" step="0.01" value="{b}"></label>
  <button type="submit">Measure</button>
</form>
<div style="width:4em;height:4em;border:1px solid #333;background:rgb({r255},{g255},{b255})"></div>
{result}
</body></html>
"""


def _rgb_table(reading) -> str:
    rows = "".join(
        f"<tr><td>{html.escape(c.wire_name)}</td><td>{reading.by_wire()[c.wire_name]}</td></tr>"
        for c in CHANNELS)
    return f"<table border=1><tr><th>channel</th><th>counts</th></tr>{rows}</table>"


class InstrumentService:
    """Wires the simulator, the measurement queue and the log together."""

    def __init__(self, model: ResponseModel | None = None, seed: int | None = None,
                 latency_s: float = 0.0, queue_timeout_s: float = 30.0,
                 log_path: str = "helios-experiments.ndjson",
                 static_dir: str | None = None, token: str | None = None,
                 client_salt: str = "helios"):
        self.model = model or default_model()
        self.queue = MeasurementQueue(self.model, seed=seed,
                                      latency_s=latency_s,
                                      timeout_s=queue_timeout_s)
        self.log = ExperimentLog(log_path)
        self.static_dir = static_dir
        self.token = token
        self.client_salt = client_salt

    def client_id(self, remote_addr: str) -> str:
        digest = hashlib.sha256(
            (self.client_salt + remote_addr).encode()).hexdigest()
        return digest[:16]

    def run_measurement(self, setting: RgbSetting, endpoint: str,
                        remote_addr: str):
        def on_record(reading):
            self.log.append({
                "timestamp": reading.timestamp.isoformat(),
                "client_id": self.client_id(remote_addr),
                "endpoint": endpoint,
                "in": setting.as_wire(),
                "out": reading.by_wire(),
            })
        return self.queue.take(setting, on_record=on_record)


class _Handler(BaseHTTPRequestHandler):
    server_version = "helios"
    protocol_version = "HTTP/1.1"

    @property
    def service(self) -> InstrumentService:
        return self.server.service

    def log_message(self, fmt, *args):   # keep the test output quiet
        pass

    def _send(self, status: int, body: str, content_type: str,
              extra_headers=None):
        payload = body.encode()
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        for key, value in (extra_headers or {}).items():
            self.send_header(key, value)
        self.end_headers()
        self.wfile.write(payload)

    def _send_json(self, status: int, body: str, extra_headers=None):
        self._send(status, body, "application/json", extra_headers)

    def _send_error_json(self, status: int, message: str, extra_headers=None):
        self._send_json(status, json.dumps({"error": message}), extra_headers)

    def _wants_html(self) -> bool:
        return "text/html" in self.headers.get("Accept", "")

    def do_GET(self):
        try:
            self._route()
        except BrokenPipeError:
            pass
        except Exception as e:   # never leak a stack trace onto the wire
            try:
                self._send_error_json(500, f"internal error: {e}")
            except Exception:
                pass

    def _route(self):
        url = urlsplit(self.path)
        query = dict(parse_qsl(url.query))

        if self.service.token and query.get("token") != self.service.token \
                and self.headers.get("X-Api-Token") != self.service.token:
            self._send_error_json(401, "missing or invalid token")
            return

        if url.path == "/api":
            self._handle_measurement(query, "api")
        elif url.path == "/gm":
            self._handle_gm(query)
        elif url.path == "/rgb":
            self._handle_measurement(query, "rgb", html_page=True)
        elif url.path == "/stats":
            self._handle_stats()
        elif url.path == "/":
            self._handle_static(url.path)
        elif self.service.static_dir:
            self._handle_static(url.path)   # panel assets live at the root
        else:
            self._send_error_json(404, f"no such endpoint: {url.path}")

    def _measure_or_respond(self, query, endpoint, allowed=("R", "G", "B")):
        try:
            setting = _parse_setting(query, allowed=allowed)
        except ValueError as e:
            self._send_error_json(400, str(e))
            return None, None
        try:
            reading = self.service.run_measurement(
                setting, endpoint, self.client_address[0])
        except QueueTimeout as e:
            retry_after = max(1, int(self.service.queue.latency_s) + 1)
            self._send_error_json(503, str(e),
                                  {"Retry-After": str(retry_after)})
            return None, None
        return setting, reading

    def _handle_measurement(self, query, endpoint, html_page=False):
        setting, reading = self._measure_or_respond(query, endpoint)
        if reading is None:
            return
        if html_page and self._wants_html():
            page = _RGB_PAGE.format(
                r=setting.r, g=setting.g, b=setting.b,
                r255=int(setting.r * 255), g255=int(setting.g * 255),
                b255=int(setting.b * 255),
                result=_rgb_table(reading))
            self._send(200, page, "text/html")
        else:
            self._send_json(200, api_body(setting, reading))

    def _handle_gm(self, query):
        setting, reading = self._measure_or_respond(query, "gm", allowed=("G",))
        if reading is None:
            return
        if self._wants_html():
            value = reading.by_wire()["515nm"]
            page = _GM_PAGE.format(
                g=setting.g,
                result=f"<p>515nm intensity: <b>{value}</b></p>")
            self._send(200, page, "text/html")
        else:
            self._send_json(200, gm_body(setting, reading))

    def _handle_stats(self):
        try:
            stats = self.service.log.stats()
        except OSError as e:
            self._send_error_json(500, f"experiment log unreadable: {e}")
            return
        self._send_json(200, json.dumps(stats))

    def _handle_static(self, path):
        if not self.service.static_dir:
            self._send(200, _PLACEHOLDER_PAGE, "text/html")
            return
        rel = "index.html" if path == "/" else path.lstrip("/")
        base = os.path.abspath(self.service.static_dir)
        full = os.path.abspath(os.path.join(base, rel))
        if not full.startswith(base + os.sep):
            self._send_error_json(404, "not found")
            return
        if not os.path.isfile(full):
            self._send_error_json(404, f"no such file: {rel}")
            return
        ctype = {
            ".html": "text/html", ".js": "text/javascript",
            ".css": "text/css", ".map": "application/json",
        }.get(os.path.splitext(full)[1], "application/octet-stream")
        with open(full, "rb") as f:
            payload = f.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


_PLACEHOLDER_PAGE = """<!doctype html>
<html><body>
<h1>helios instrument</h1>
<p>No control panel bundle is configured. Try the
<a href="/gm">Green Machine</a>, the <a href="/rgb">RGB Machine</a> or the
<a href="/api?G=0.5">JSON API</a>.</p>
</body></html>
"""


def build_server(service: InstrumentService, host: str = "127.0.0.1",
                 port: int = 0) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _Handler)
    server.daemon_threads = True
    server.service = service
    return server


class BackgroundServer:
    """Run a service on an ephemeral port in a daemon thread (tests, CLI)."""

    def __init__(self, service: InstrumentService, host: str = "127.0.0.1",
                 port: int = 0):
        self.server = build_server(service, host, port)
        self.thread = threading.Thread(target=self.server.serve_forever,
                                       daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)
