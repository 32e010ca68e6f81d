"""The localhost gateway: ingests device scans, maintains the authoritative
context state, and serves it to browsers by pull, push, and notify-only
delivery.

One writer at a time mutates the store (the ingest path is serialized by a
lock); snapshots hand out the immutable published state, and the event hub
fans published states out to per-subscriber buffers in publish order. A new
state is published only when it materially differs from the last one, so
RSSI jitter alone never spams subscribers.

Binds to localhost by default and carries no authentication: the trust model
is the device's own local server. Scan data is served read-only; nothing
here can touch network connectivity.

HTTP endpoints (JSON unless noted), all under /api/v1:

    POST /scan            ScanPayload -> 204, X-PhyWeb-Seq header
    GET  /networks        current fingerprint as [{SSID, MAC, RSSI, ...}]
    GET  /context         ContextState (pull)
    GET  /context.js?callback=NAME   script text NAME(<state>);
    GET  /events?mode=push|notify    SSE stream
    POST /predicates      JSON array, replaces the set
    GET  /predicates
    POST /adapt?mode=css|prune&report=0|1   body HTML
    GET  /enrich?url=U    {"url": enriched, "ok": bool}
    POST /sim/position, /sim/ambient, GET /sim/env   (sim mode only)
"""

from __future__ import annotations

import json
import re
import threading
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from .adapt import AdaptMode, HtmlStructureError, adapt, enrich_url, load_bindings
from .context import ContextState, ScanPayload, SensorWindow, Thresholds, build_context
from .fingerprint import (
    Fingerprint,
    FingerprintError,
    MatchState,
    ProximityPredicate,
    predicates_from_json,
    predicates_to_json,
    serialize_fingerprint,
)

__all__ = [
    "EventMode",
    "EventFrame",
    "Subscriber",
    "Gateway",
    "GatewayConfig",
    "GatewayServer",
    "materially_differs",
    "CALLBACK_NAME",
]

CALLBACK_NAME = re.compile(r"^[A-Za-z_$][A-Za-z0-9_$]*$")

PUSH = "push"
NOTIFY = "notify"
EVENT_MODES = (PUSH, NOTIFY)


class EventMode:
    PUSH = PUSH
    NOTIFY = NOTIFY


@dataclass(frozen=True)
class EventFrame:
    """One delivery to a subscriber: the full state for push consumers, the
    bare sequence number for notify consumers (who then pull)."""

    mode: str
    seq: int
    state: ContextState

    def sse_bytes(self) -> bytes:
        if self.mode == PUSH:
            name = "context"
            data = json.dumps(self.state.to_json_dict())
        else:
            name = "available"
            data = json.dumps({"seq": self.seq})
        return f"event: {name}\nid: {self.seq}\ndata: {data}\n\n".encode()


class Subscriber:
    """Bounded per-subscriber frame buffer; overflowing it disconnects the
    subscriber (signaled on the stream after the remaining frames drain)."""

    _CLOSED = object()

    def __init__(self, mode: str, capacity: int):
        self.mode = mode
        self.capacity = capacity
        self.overflowed = False
        self._closed = False
        self._frames: deque[EventFrame] = deque()
        self._cv = threading.Condition()

    def put(self, frame: EventFrame) -> None:
        with self._cv:
            if self._closed:
                return
            if len(self._frames) >= self.capacity:
                self.overflowed = True
                self._closed = True
            else:
                self._frames.append(frame)
            self._cv.notify()

    def get(self, timeout: float):
        """Next frame, or None on timeout, or Subscriber._CLOSED after the
        stream ends (drains buffered frames first)."""
        with self._cv:
            if not self._frames and not self._closed:
                self._cv.wait(timeout)
            if self._frames:
                return self._frames.popleft()
            return self._CLOSED if self._closed else None

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify()


def materially_differs(old: ContextState, new: ContextState) -> bool:
    """The publish rule: enum or classifier-flag changes, zone changes, a
    change in which nodes are visible, a noise swing over 1 dB, or a light
    band change. Plain RSSI jitter is immaterial."""
    if old.movement is not new.movement or old.noise is not new.noise or old.light is not new.light:
        return True
    if old.stable_surface != new.stable_surface or old.rotating != new.rotating:
        return True
    if old.zones != new.zones:
        return True
    if old.networks.node_keys() != new.networks.node_keys():
        return True
    if old.noise_db is not None and new.noise_db is not None and abs(old.noise_db - new.noise_db) > 1.0:
        return True
    return False


class Gateway:
    """Transport-free core; the HTTP layer is a thin shell over this."""

    def __init__(
        self,
        thresholds: Thresholds | None = None,
        bindings: dict[str, str] | None = None,
        predicates: list[ProximityPredicate] | None = None,
        subscriber_buffer: int = 64,
    ):
        self.thresholds = thresholds or Thresholds()
        self.bindings = dict(bindings or {})
        self.subscriber_buffer = subscriber_buffer
        self._lock = threading.Lock()
        self._window = SensorWindow(window_ms=self.thresholds.window_ms)
        self._fingerprint = Fingerprint()
        self._predicates: dict[str, ProximityPredicate] = {p.id: p for p in (predicates or [])}
        self._match_states: dict[str, MatchState] = {}
        self._current = ContextState()
        self._subscribers: list[Subscriber] = []

    # -- ingest / pull -------------------------------------------------------

    def ingest_scan(self, payload: ScanPayload) -> int:
        """Merge a scan, rebuild the context, publish on material change.
        Returns the current (possibly unchanged) sequence number."""
        with self._lock:
            if payload.sensors:
                self._window.extend(payload.sensors)
            if payload.fingerprint is not None:
                self._fingerprint = payload.fingerprint
            candidate, new_states = build_context(
                self._window,
                self._fingerprint,
                self._predicates,
                self._match_states,
                prev_seq=self._current.seq,
                thresholds=self.thresholds,
            )
            self._match_states = new_states
            if materially_differs(self._current, candidate):
                self._current = candidate
                for sub in self._subscribers:
                    sub.put(EventFrame(sub.mode, candidate.seq, candidate))
            return self._current.seq

    def snapshot(self) -> ContextState:
        with self._lock:
            return self._current  # immutable value

    # -- push / notify ---------------------------------------------------------

    def subscribe(self, mode: str) -> Subscriber:
        """Register a subscriber; it immediately receives the current state
        (push) or sequence number (notify), then every published state."""
        if mode not in EVENT_MODES:
            raise ValueError(f"mode must be one of {EVENT_MODES}")
        sub = Subscriber(mode, self.subscriber_buffer)
        with self._lock:
            sub.put(EventFrame(mode, self._current.seq, self._current))
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscriber) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)
        sub.close()

    def close_subscribers(self) -> None:
        with self._lock:
            subs = list(self._subscribers)
            self._subscribers.clear()
        for sub in subs:
            sub.close()

    # -- derived views ---------------------------------------------------------

    def context_json_text(self) -> str:
        return json.dumps(self.snapshot().to_json_dict())

    def networks_json_text(self) -> str:
        return serialize_fingerprint(self.snapshot().networks)

    def callback_script(self, name: str) -> str:
        """Script text ``name(<context-json>);`` for the asynchronous
        callback pattern; the name is validated to prevent script injection."""
        if not CALLBACK_NAME.match(name):
            raise ValueError(f"invalid callback name {name!r}")
        return f"{name}({self.context_json_text()});"

    def set_predicates(self, predicates: list[ProximityPredicate]) -> None:
        """Replace the predicate set; match states restart (dwell included)."""
        with self._lock:
            self._predicates = {p.id: p for p in predicates}
            self._match_states = {}

    def get_predicates(self) -> list[ProximityPredicate]:
        with self._lock:
            return list(self._predicates.values())

    def adapt_html(self, html: str, mode: AdaptMode):
        state = self.snapshot()
        return adapt(html, state, state.networks, mode, self.bindings)

    def enrich(self, url: str):
        return enrich_url(url, self.snapshot())


@dataclass
class GatewayConfig:
    """Merged configuration: flags beat the config file, which beats these
    defaults. Paths from a config file resolve against its directory."""

    port: int = 8170
    bind: str = "127.0.0.1"
    thresholds: Thresholds = field(default_factory=Thresholds)
    bindings: dict[str, str] = field(default_factory=dict)
    predicates: list[ProximityPredicate] = field(default_factory=list)
    subscriber_buffer: int = 64
    heartbeat_s: float = 15.0
    ui_root: Path | None = None
    sim: dict | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "GatewayConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            offset = len(text[: exc.pos].encode("utf-8"))
            raise ValueError(f"{path}: {exc.msg} (byte {offset})") from None
        if not isinstance(obj, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(obj, base_dir=path.parent)

    @classmethod
    def from_dict(cls, obj: dict, base_dir: Path | None = None) -> "GatewayConfig":
        base = base_dir or Path.cwd()
        config = cls()
        if "port" in obj:
            config.port = int(obj["port"])
        if "bind" in obj:
            config.bind = str(obj["bind"])
        if "thresholds" in obj:
            config.thresholds = Thresholds.from_dict(dict(obj["thresholds"]))
        if obj.get("bindings_path"):
            config.bindings = load_bindings((base / obj["bindings_path"]).read_text(encoding="utf-8"))
        if obj.get("predicates_path"):
            config.predicates = predicates_from_json((base / obj["predicates_path"]).read_text(encoding="utf-8"))
        if "subscriber_buffer" in obj:
            config.subscriber_buffer = int(obj["subscriber_buffer"])
        if "heartbeat_s" in obj:
            config.heartbeat_s = float(obj["heartbeat_s"])
        if obj.get("ui_root"):
            config.ui_root = base / str(obj["ui_root"])
        if obj.get("sim") is not None:
            sim = dict(obj["sim"])
            if sim.get("env_path"):
                sim["env_path"] = str(base / sim["env_path"])
            config.sim = sim
        return config

    def build_gateway(self) -> Gateway:
        return Gateway(
            thresholds=self.thresholds,
            bindings=self.bindings,
            predicates=self.predicates,
            subscriber_buffer=self.subscriber_buffer,
        )


_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".map": "application/json",
}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "phyweb"

    # set by GatewayServer
    gateway: Gateway
    heartbeat_s: float
    ui_root: Path | None
    sim_bridge = None
    quiet = True

    def log_message(self, fmt, *args):
        if not self.quiet:
            super().log_message(fmt, *args)

    # -- helpers ---------------------------------------------------------------

    def _send(self, code: int, body: bytes, content_type: str):
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(body)

    def _send_json(self, code: int, obj) -> None:
        self._send(code, json.dumps(obj).encode(), "application/json")

    def _send_error_json(self, code: int, message: str, **extra) -> None:
        self._send_json(code, {"error": message, **extra})

    def _send_no_content(self, **headers) -> None:
        self.send_response(204)
        for name, value in headers.items():
            self.send_header(name.replace("_", "-"), str(value))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _query(self) -> dict[str, str]:
        raw = parse_qs(urlsplit(self.path).query, keep_blank_values=True)
        return {k: v[-1] for k, v in raw.items()}

    @property
    def route(self) -> str:
        return urlsplit(self.path).path

    # -- methods ---------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_HEAD(self):
        self.do_GET()

    def do_GET(self):
        route = self.route
        if route == "/api/v1/context":
            self._send(200, self.gateway.context_json_text().encode(), "application/json")
        elif route == "/api/v1/networks":
            self._send(200, self.gateway.networks_json_text().encode(), "application/json")
        elif route == "/api/v1/context.js":
            self._handle_callback_script()
        elif route == "/api/v1/events":
            self._handle_events()
        elif route == "/api/v1/predicates":
            self._send(200, predicates_to_json(self.gateway.get_predicates()).encode(), "application/json")
        elif route == "/api/v1/enrich":
            self._handle_enrich()
        elif route == "/api/v1/sim/env":
            if self.sim_bridge is None:
                self._send_error_json(404, "sim mode disabled")
            else:
                env = self.sim_bridge.env_json_dict()
                env["device"] = dict(zip(("x", "y"), self.sim_bridge.position()))
                self._send_json(200, env)
        elif route.startswith("/api/"):
            self._send_error_json(404, f"no such endpoint {route}")
        else:
            self._serve_static(route)

    def do_POST(self):
        route = self.route
        if route == "/api/v1/scan":
            self._handle_scan()
        elif route == "/api/v1/predicates":
            self._handle_predicates()
        elif route == "/api/v1/adapt":
            self._handle_adapt()
        elif route == "/api/v1/sim/position":
            self._handle_sim(lambda b, obj: b.set_position(float(obj["x"]), float(obj["y"])))
        elif route == "/api/v1/sim/ambient":
            self._handle_sim(
                lambda b, obj: b.set_ambient(
                    lux=obj.get("lux"),
                    audio_rms=obj.get("audio_rms", obj.get("audioRms")),
                )
            )
        else:
            self._send_error_json(404, f"no such endpoint {route}")

    # -- endpoint bodies ---------------------------------------------------------

    def _handle_scan(self):
        try:
            obj = json.loads(self._read_body().decode("utf-8"))
            payload = ScanPayload.from_json_dict(obj)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            self._send_error_json(400, f"malformed scan payload: {exc}")
            return
        except (FingerprintError, ValueError) as exc:
            self._send_error_json(400, str(exc))
            return
        seq = self.gateway.ingest_scan(payload)
        self._send_no_content(X_PhyWeb_Seq=seq)

    def _handle_callback_script(self):
        name = self._query().get("callback", "")
        try:
            script = self.gateway.callback_script(name)
        except ValueError as exc:
            self._send_error_json(400, str(exc))
            return
        self._send(200, script.encode(), "text/javascript; charset=utf-8")

    def _handle_enrich(self):
        url = self._query().get("url")
        if url is None:
            self._send_error_json(400, "missing url parameter")
            return
        enriched = self.gateway.enrich(url)
        self._send_json(200, {"url": enriched.url, "ok": enriched.ok})

    def _handle_predicates(self):
        try:
            predicates = predicates_from_json(self._read_body().decode("utf-8"))
        except (FingerprintError, UnicodeDecodeError) as exc:
            self._send_error_json(400, str(exc))
            return
        self.gateway.set_predicates(predicates)
        self._send_no_content()

    def _handle_adapt(self):
        query = self._query()
        mode_name = query.get("mode", "css")
        try:
            mode = AdaptMode(mode_name)
        except ValueError:
            self._send_error_json(400, f"mode must be css or prune, not {mode_name!r}")
            return
        try:
            html = self._read_body().decode("utf-8")
        except UnicodeDecodeError as exc:
            self._send_error_json(400, f"body is not UTF-8: {exc}")
            return
        try:
            out, report = self.gateway.adapt_html(html, mode)
        except HtmlStructureError as exc:
            self._send_error_json(400, str(exc), offset=exc.offset)
            return
        if query.get("report") == "1":
            self._send_json(200, {"html": out, "report": report.to_json_dict()})
        else:
            self._send(200, out.encode(), "text/html; charset=utf-8")

    def _handle_sim(self, apply):
        if self.sim_bridge is None:
            self._send_error_json(404, "sim mode disabled")
            return
        try:
            obj = json.loads(self._read_body().decode("utf-8"))
            result = apply(self.sim_bridge, obj)
        except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError, ValueError) as exc:
            self._send_error_json(400, f"bad sim request: {exc}")
            return
        self._send_json(200, result)

    def _handle_events(self):
        mode = self._query().get("mode", PUSH)
        if mode not in EVENT_MODES:
            self._send_error_json(400, f"mode must be push or notify, not {mode!r}")
            return
        sub = self.gateway.subscribe(mode)
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Connection", "close")
        self.end_headers()
        try:
            while True:
                item = sub.get(timeout=self.heartbeat_s)
                if item is None:
                    self.wfile.write(b": hb\n\n")
                    self.wfile.flush()
                    continue
                if item is Subscriber._CLOSED:
                    if sub.overflowed:
                        self.wfile.write(b'event: error\ndata: {"error": "slow consumer disconnected"}\n\n')
                        self.wfile.flush()
                    break
                self.wfile.write(item.sse_bytes())
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.gateway.unsubscribe(sub)

    def _serve_static(self, route: str):
        if self.ui_root is None:
            self._send_error_json(404, f"no such path {route}")
            return
        rel = route.lstrip("/") or "index.html"
        target = (self.ui_root / rel).resolve()
        root = self.ui_root.resolve()
        if root not in target.parents and target != root:
            self._send_error_json(404, "outside ui root")
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._send_error_json(404, f"no such file {route}")
            return
        content_type = _CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
        self._send(200, target.read_bytes(), content_type)


class GatewayServer:
    """ThreadingHTTPServer wrapper tying a Gateway (and optional sim bridge)
    to the HTTP surface. Port 0 picks an ephemeral port (tests)."""

    def __init__(self, gateway: Gateway, config: GatewayConfig, sim_bridge=None, quiet: bool = True):
        self.gateway = gateway
        self.config = config
        self.sim_bridge = sim_bridge

        handler = type(
            "BoundHandler",
            (_Handler,),
            {
                "gateway": gateway,
                "heartbeat_s": config.heartbeat_s,
                "ui_root": config.ui_root,
                "sim_bridge": sim_bridge,
                "quiet": quiet,
            },
        )
        self.httpd = ThreadingHTTPServer((config.bind, config.port), handler)
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://{self.config.bind}:{self.port}"

    def start(self) -> None:
        if self.sim_bridge is not None:
            self.sim_bridge.start()
        self._thread = threading.Thread(
            target=lambda: self.httpd.serve_forever(poll_interval=0.05), name="phyweb-http", daemon=True
        )
        self._thread.start()

    def serve_forever(self) -> None:
        if self.sim_bridge is not None:
            self.sim_bridge.start()
        try:
            self.httpd.serve_forever()
        finally:
            self.stop()

    def stop(self) -> None:
        if self.sim_bridge is not None:
            self.sim_bridge.stop()
        self.gateway.close_subscribers()
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=2)
            self._thread = None
