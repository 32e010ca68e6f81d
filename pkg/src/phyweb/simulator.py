"""Deterministic stand-in for the phone: synthesizes network observations from
a log-distance path-loss model and sensor streams from a scripted (or
interactively steered) device path.

RSSI at distance d meters is ``tx_power_dbm - 10 * n * log10(max(d, 1))``
plus optional gaussian shadowing; readings below the detection floor are
dropped, the rest rounded to integer dBm like real scan APIs. Accelerometer
jitter tracks the speed band (still / walking / riding) so the movement
classifier's ambiguity-band rule is exercisable end to end. Everything is
driven by one seeded Random, so a seed plus an environment and trace fully
determine the emitted payload sequence.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from typing import Callable

from .context import (
    AccelSample,
    AudioSample,
    GpsSample,
    LightSample,
    OrientSample,
    ScanPayload,
)
from .fingerprint import Fingerprint, NetworkObservation, NodeKind, canonical_mac

__all__ = [
    "SimNode",
    "Environment",
    "Trace",
    "Waypoint",
    "AmbientPoint",
    "RotateSpan",
    "Ambient",
    "TraceSummary",
    "SinkError",
    "synthesize_scan",
    "run_trace",
    "SimBridge",
    "load_environment",
    "load_trace",
]

METERS_PER_DEGREE = 111_320.0

# accel |a| jitter stddev per speed band, m/s^2; the walking band is noisy
# enough to trip the movement classifier's ambiguity rule, riding is not
ACCEL_JITTER_STILL = 0.05
ACCEL_JITTER_WALKING = 0.8
ACCEL_JITTER_RIDING = 0.3

ACCEL_SAMPLES_PER_SCAN = 5
ORIENT_SAMPLES_PER_SCAN = 3
GRAVITY = 9.81


class SinkError(RuntimeError):
    """A trace sink failed; ``step`` is the index of the failing emission."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class SimNode:
    mac: str
    ssid: str
    pos: tuple[float, float]
    kind: NodeKind = NodeKind.WIFI
    tx_power_dbm: float = -40.0  # RSSI at the 1 m reference distance
    path_loss_exponent: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, "mac", canonical_mac(self.mac))
        object.__setattr__(self, "pos", (float(self.pos[0]), float(self.pos[1])))
        if not 1.5 <= self.path_loss_exponent <= 6:
            raise ValueError(f"path_loss_exponent {self.path_loss_exponent} outside [1.5, 6]")


@dataclass(frozen=True)
class Environment:
    nodes: tuple[SimNode, ...] = ()
    noise_sigma_db: float = 2.0
    detect_floor_dbm: float = -95.0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if self.noise_sigma_db < 0:
            raise ValueError("noise_sigma_db must be non-negative")
        macs = [n.mac for n in self.nodes]
        if len(set(macs)) != len(macs):
            raise ValueError("node macs must be unique")

    def rssi_at(
        self, node: SimNode, pos: tuple[float, float], rng: random.Random | None = None
    ) -> int | None:
        """Integer RSSI of one node at a position, or None below the floor."""
        d = max(math.dist(node.pos, pos), 1.0)
        value = node.tx_power_dbm - 10.0 * node.path_loss_exponent * math.log10(d)
        if rng is not None and self.noise_sigma_db > 0:
            value += rng.gauss(0.0, self.noise_sigma_db)
        if value < self.detect_floor_dbm:
            return None
        return round(value)


@dataclass(frozen=True)
class Waypoint:
    t_s: float
    x: float
    y: float


@dataclass(frozen=True)
class AmbientPoint:
    t_s: float
    lux: float | None = None
    audio_rms: float | None = None


@dataclass(frozen=True)
class RotateSpan:
    t0_s: float
    t1_s: float
    rate_dps: float


@dataclass(frozen=True)
class Trace:
    waypoints: tuple[Waypoint, ...]
    ambient: tuple[AmbientPoint, ...] = ()
    rotate_spans: tuple[RotateSpan, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        object.__setattr__(self, "ambient", tuple(sorted(self.ambient, key=lambda a: a.t_s)))
        object.__setattr__(self, "rotate_spans", tuple(self.rotate_spans))
        if not self.waypoints:
            raise ValueError("trace needs at least one waypoint")
        ts = [w.t_s for w in self.waypoints]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("waypoint times must strictly increase")

    def position_at(self, t_s: float) -> tuple[float, float]:
        wp = self.waypoints
        if t_s <= wp[0].t_s:
            return (wp[0].x, wp[0].y)
        for a, b in zip(wp, wp[1:]):
            if t_s <= b.t_s:
                f = (t_s - a.t_s) / (b.t_s - a.t_s)
                return (a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
        return (wp[-1].x, wp[-1].y)

    def speed_at(self, t_s: float) -> float:
        """Speed of the segment containing t_s (segment distance over time)."""
        wp = self.waypoints
        if len(wp) < 2:
            return 0.0
        for a, b in zip(wp, wp[1:]):
            if t_s <= b.t_s:
                return math.dist((a.x, a.y), (b.x, b.y)) / (b.t_s - a.t_s)
        a, b = wp[-2], wp[-1]
        return math.dist((a.x, a.y), (b.x, b.y)) / (b.t_s - a.t_s)

    def ambient_at(self, t_s: float) -> "Ambient":
        lux = None
        rms = None
        for point in self.ambient:
            if point.t_s > t_s:
                break
            if point.lux is not None:
                lux = point.lux
            if point.audio_rms is not None:
                rms = point.audio_rms
        rotate: float | None
        if self.rotate_spans:
            rotate = 0.0
            for span in self.rotate_spans:
                if span.t0_s <= t_s <= span.t1_s:
                    rotate = span.rate_dps
                    break
        else:
            rotate = None
        return Ambient(lux=lux, audio_rms=rms, rotate_dps=rotate)


@dataclass(frozen=True)
class Ambient:
    """Ambient conditions for one synthesized scan; None leaves that sensor
    silent (rotate_dps None emits no orientation samples at all)."""

    lux: float | None = None
    audio_rms: float | None = None
    rotate_dps: float | None = None


def _accel_jitter(speed_mps: float) -> float:
    if speed_mps < 0.3:
        return ACCEL_JITTER_STILL
    if speed_mps <= 2.5:
        return ACCEL_JITTER_WALKING
    return ACCEL_JITTER_RIDING


def synthesize_scan(
    env: Environment,
    pos: tuple[float, float],
    speed_mps: float,
    ambient: Ambient,
    t_ms: int,
    rng: random.Random,
) -> ScanPayload:
    """One simulated device report at position ``pos`` and time ``t_ms``."""
    observations = []
    for node in env.nodes:
        rssi = env.rssi_at(node, pos, rng if env.noise_sigma_db > 0 else None)
        if rssi is not None:
            observations.append(
                NetworkObservation(ssid=node.ssid, mac=node.mac, rssi=rssi, kind=node.kind, observed_at=t_ms)
            )
    sensors: list = [
        GpsSample(lat=pos[1] / METERS_PER_DEGREE, lon=pos[0] / METERS_PER_DEGREE, t=t_ms, speed_mps=speed_mps)
    ]
    jitter = _accel_jitter(speed_mps)
    for k in range(ACCEL_SAMPLES_PER_SCAN):
        t = max(t_ms - 100 * (ACCEL_SAMPLES_PER_SCAN - 1 - k), 0)
        sensors.append(AccelSample(0.0, 0.0, GRAVITY + rng.gauss(0.0, jitter), t=t))
    if ambient.rotate_dps is not None:
        for k in range(ORIENT_SAMPLES_PER_SCAN):
            dt_s = 0.25 * (ORIENT_SAMPLES_PER_SCAN - 1 - k)
            t = max(t_ms - int(dt_s * 1000), 0)
            azimuth = (ambient.rotate_dps * (t / 1000.0)) % 360.0
            sensors.append(OrientSample(azimuth=azimuth, pitch=0.0, roll=0.0, t=t))
    if ambient.audio_rms is not None:
        sensors.append(AudioSample(rms=ambient.audio_rms, t=t_ms))
    if ambient.lux is not None:
        sensors.append(LightSample(lux=ambient.lux, t=t_ms))
    return ScanPayload(
        fingerprint=Fingerprint.from_observations(observations, captured_at=t_ms),
        sensors=tuple(sensors),
        source="sim",
    )


@dataclass
class TraceSummary:
    steps: int = 0
    publishes: int = 0

    def to_json_dict(self) -> dict:
        return {"steps": self.steps, "publishes": self.publishes}


def run_trace(
    env: Environment,
    trace: Trace,
    interval_ms: int,
    sink: Callable[[ScanPayload], int | None],
    rng: random.Random | None = None,
    baseline_seq: int = 0,
) -> TraceSummary:
    """Step simulated time across the trace, emitting one payload per step.

    ``sink`` receives each payload and may return the gateway's sequence
    number (for publish counting against ``baseline_seq``) or None for
    fire-and-forget sinks. Sink failures abort with the step index.
    """
    if interval_ms <= 0:
        raise ValueError("interval_ms must be positive")
    rng = rng or random.Random(0)
    summary = TraceSummary()
    last_seq: int | None = None
    t0_ms = int(trace.waypoints[0].t_s * 1000)
    t_end_ms = int(trace.waypoints[-1].t_s * 1000)
    t_ms = t0_ms
    while t_ms <= t_end_ms:
        t_s = t_ms / 1000.0
        payload = synthesize_scan(env, trace.position_at(t_s), trace.speed_at(t_s), trace.ambient_at(t_s), t_ms, rng)
        try:
            seq = sink(payload)
        except SinkError:
            raise
        except Exception as exc:
            raise SinkError(str(exc), summary.steps) from exc
        summary.steps += 1
        if seq is not None:
            last_seq = seq
        t_ms += interval_ms
    if last_seq is not None:
        summary.publishes = max(last_seq - baseline_seq, 0)
    return summary


class SimBridge:
    """Interactive simulation driver for the gateway's /sim endpoints.

    Holds the current device position and ambient settings; each tick of the
    emit loop synthesizes a scan and hands it to the sink (the gateway ingest
    path). Speed is estimated from the positional change between interactive
    updates and decays to zero once the position goes stale.
    """

    def __init__(
        self,
        env: Environment,
        sink: Callable[[ScanPayload], int | None],
        interval_ms: int = 500,
        seed: int = 0,
        start: tuple[float, float] = (0.0, 0.0),
        speed_hold_ms: int = 1500,
        now_ms: Callable[[], int] | None = None,
    ):
        import threading
        import time

        self.env = env
        self.sink = sink
        self.interval_ms = interval_ms
        self.speed_hold_ms = speed_hold_ms
        self._rng = random.Random(seed)
        self._now_ms = now_ms or (lambda: int(time.monotonic() * 1000))
        self._lock = threading.Lock()
        self._pos = (float(start[0]), float(start[1]))
        self._speed = 0.0
        self._moved_at = self._now_ms() - speed_hold_ms
        self._ambient = Ambient()
        self._stop = threading.Event()
        self._thread: "threading.Thread | None" = None

    def set_position(self, x: float, y: float) -> dict:
        """Move the device; speed is distance over time since the last move."""
        now = self._now_ms()
        with self._lock:
            dt_s = (now - self._moved_at) / 1000.0
            step = math.dist(self._pos, (x, y))
            self._speed = step / dt_s if dt_s > 0 else 0.0
            self._pos = (float(x), float(y))
            self._moved_at = now
            return {"x": self._pos[0], "y": self._pos[1], "speed_mps": self._speed}

    def position(self) -> tuple[float, float]:
        with self._lock:
            return self._pos

    def set_ambient(self, lux: float | None = None, audio_rms: float | None = None) -> dict:
        with self._lock:
            self._ambient = replace(
                self._ambient,
                lux=self._ambient.lux if lux is None else float(lux),
                audio_rms=self._ambient.audio_rms if audio_rms is None else float(audio_rms),
            )
            return {"lux": self._ambient.lux, "audio_rms": self._ambient.audio_rms}

    def tick(self) -> int | None:
        """Synthesize and deliver one scan at the current settings."""
        now = self._now_ms()
        with self._lock:
            if now - self._moved_at > self.speed_hold_ms:
                self._speed = 0.0
            pos = self._pos
            speed = self._speed
            ambient = self._ambient
        return self.sink(synthesize_scan(self.env, pos, speed, ambient, now, self._rng))

    def start(self):
        import threading

        if self._thread is not None:
            return
        self._stop.clear()

        def loop():
            while not self._stop.wait(self.interval_ms / 1000.0):
                try:
                    self.tick()
                except Exception:
                    pass  # gateway rejection must not kill the emitter

        self._thread = threading.Thread(target=loop, name="phyweb-sim", daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2)
            self._thread = None

    def env_json_dict(self) -> dict:
        return environment_to_json_dict(self.env)


# --- file formats -----------------------------------------------------------


def environment_to_json_dict(env: Environment) -> dict:
    return {
        "nodes": [
            {
                "mac": n.mac,
                "ssid": n.ssid,
                "kind": n.kind.value,
                "pos": [n.pos[0], n.pos[1]],
                "tx_power_dbm": n.tx_power_dbm,
                "path_loss_exponent": n.path_loss_exponent,
            }
            for n in env.nodes
        ],
        "noise_sigma_db": env.noise_sigma_db,
        "detect_floor_dbm": env.detect_floor_dbm,
    }


def load_environment(text: str) -> Environment:
    """Environment file: {nodes: [{mac, ssid, kind, pos: [x, y],
    tx_power_dbm, path_loss_exponent}], noise_sigma_db, detect_floor_dbm}."""
    obj = json.loads(text)
    if not isinstance(obj, dict):
        raise ValueError("environment must be a JSON object")
    nodes = []
    for i, raw in enumerate(obj.get("nodes", [])):
        try:
            pos = raw["pos"]
            nodes.append(
                SimNode(
                    mac=str(raw["mac"]),
                    ssid=str(raw.get("ssid", "")),
                    pos=(float(pos[0]), float(pos[1])),
                    kind=NodeKind(str(raw.get("kind", "WIFI")).upper()),
                    tx_power_dbm=float(raw.get("tx_power_dbm", -40.0)),
                    path_loss_exponent=float(raw.get("path_loss_exponent", 2.5)),
                )
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ValueError(f"node {i}: {exc}") from None
    try:
        return Environment(
            nodes=tuple(nodes),
            noise_sigma_db=float(obj.get("noise_sigma_db", 2.0)),
            detect_floor_dbm=float(obj.get("detect_floor_dbm", -95.0)),
        )
    except ValueError as exc:
        raise ValueError(str(exc)) from None


def load_trace(text: str) -> Trace:
    """Trace file: {waypoints: [{t_s, x, y}], ambient: [{t_s, lux,
    audio_rms}], rotate_spans: [{t0_s, t1_s, rate_dps}]}."""
    obj = json.loads(text)
    if not isinstance(obj, dict):
        raise ValueError("trace must be a JSON object")
    try:
        waypoints = tuple(
            Waypoint(t_s=float(w["t_s"]), x=float(w["x"]), y=float(w["y"])) for w in obj.get("waypoints", [])
        )
        ambient = tuple(
            AmbientPoint(
                t_s=float(a["t_s"]),
                lux=float(a["lux"]) if a.get("lux") is not None else None,
                audio_rms=float(a["audio_rms"]) if a.get("audio_rms") is not None else None,
            )
            for a in obj.get("ambient", [])
        )
        spans = tuple(
            RotateSpan(t0_s=float(r["t0_s"]), t1_s=float(r["t1_s"]), rate_dps=float(r["rate_dps"]))
            for r in obj.get("rotate_spans", [])
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"bad trace entry: {exc}") from None
    return Trace(waypoints=waypoints, ambient=ambient, rotate_spans=spans)
