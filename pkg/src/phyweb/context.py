"""Ambient context: sensor sample windows, the sensing-analysis classifiers,
and the fused ContextState snapshot the gateway publishes.

Classifiers are pure functions of a trailing sample window. Every numeric
threshold lives in :class:`Thresholds` and is overridable through the gateway
config; the defaults are documented there.
"""

from __future__ import annotations

import bisect
import enum
import json
import math
import statistics
from dataclasses import dataclass, field, fields

from .fingerprint import (
    Fingerprint,
    MatchState,
    ProximityPredicate,
    advance_match,
    match_raw,
    parse_fingerprint,
    serialize_fingerprint,
)

__all__ = [
    "Movement",
    "NoiseLevel",
    "LightLevel",
    "GpsSample",
    "AccelSample",
    "OrientSample",
    "AudioSample",
    "LightSample",
    "SensorWindow",
    "Thresholds",
    "ContextState",
    "ScanPayload",
    "classify_movement",
    "noise_level",
    "noise_band",
    "light_band",
    "surface_stability",
    "rotation_trend",
    "light_level",
    "build_context",
]

EARTH_RADIUS_M = 6371000.0
NOISE_FLOOR_DB = -120.0


class Movement(enum.Enum):
    UNKNOWN = "UNKNOWN"
    STATIONARY = "STATIONARY"
    WALKING = "WALKING"
    VEHICLE = "VEHICLE"


class NoiseLevel(enum.Enum):
    UNKNOWN = "UNKNOWN"
    QUIET = "QUIET"
    MODERATE = "MODERATE"
    LOUD = "LOUD"


class LightLevel(enum.Enum):
    UNKNOWN = "UNKNOWN"
    DARK = "DARK"
    DIM = "DIM"
    NORMAL = "NORMAL"
    BRIGHT = "BRIGHT"


def _check_t(t: int):
    if t < 0:
        raise ValueError(f"sample timestamp {t} is negative")


@dataclass(frozen=True)
class GpsSample:
    lat: float
    lon: float
    t: int
    speed_mps: float | None = None

    def __post_init__(self):
        _check_t(self.t)
        if self.speed_mps is not None and self.speed_mps < 0:
            raise ValueError("speed_mps must be non-negative")


@dataclass(frozen=True)
class AccelSample:
    ax: float
    ay: float
    az: float
    t: int

    def __post_init__(self):
        _check_t(self.t)

    @property
    def magnitude(self) -> float:
        return math.sqrt(self.ax**2 + self.ay**2 + self.az**2)


@dataclass(frozen=True)
class OrientSample:
    azimuth: float
    pitch: float
    roll: float
    t: int

    def __post_init__(self):
        _check_t(self.t)
        if not 0 <= self.azimuth < 360:
            raise ValueError(f"azimuth {self.azimuth} outside [0, 360)")


@dataclass(frozen=True)
class AudioSample:
    rms: float
    t: int

    def __post_init__(self):
        _check_t(self.t)
        if not 0 <= self.rms <= 1:
            raise ValueError(f"audio rms {self.rms} outside [0, 1]")


@dataclass(frozen=True)
class LightSample:
    lux: float
    t: int

    def __post_init__(self):
        _check_t(self.t)
        if self.lux < 0:
            raise ValueError("lux must be non-negative")


_SENSOR_BUFFERS = {
    GpsSample: "gps",
    AccelSample: "accel",
    OrientSample: "orient",
    AudioSample: "audio",
    LightSample: "light",
}


class SensorWindow:
    """Per-sensor buffers of the trailing ``window_ms`` of samples.

    Buffers stay sorted by sample time regardless of insertion order; a sample
    is evicted once the newest sample in its buffer is more than window_ms
    ahead of it. Mutated only by its single owner (the gateway ingest path);
    readers get tuples.
    """

    def __init__(self, window_ms: int = 5000):
        if window_ms <= 0:
            raise ValueError("window_ms must be positive")
        self.window_ms = window_ms
        self._buffers: dict[str, list] = {name: [] for name in _SENSOR_BUFFERS.values()}

    def add(self, sample) -> None:
        name = _SENSOR_BUFFERS.get(type(sample))
        if name is None:
            raise TypeError(f"not a sensor sample: {sample!r}")
        buf = self._buffers[name]
        bisect.insort(buf, sample, key=lambda s: s.t)
        horizon = buf[-1].t - self.window_ms
        while buf and buf[0].t < horizon:
            buf.pop(0)

    def extend(self, samples) -> None:
        for s in samples:
            self.add(s)

    @property
    def gps(self) -> tuple[GpsSample, ...]:
        return tuple(self._buffers["gps"])

    @property
    def accel(self) -> tuple[AccelSample, ...]:
        return tuple(self._buffers["accel"])

    @property
    def orient(self) -> tuple[OrientSample, ...]:
        return tuple(self._buffers["orient"])

    @property
    def audio(self) -> tuple[AudioSample, ...]:
        return tuple(self._buffers["audio"])

    @property
    def light(self) -> tuple[LightSample, ...]:
        return tuple(self._buffers["light"])

    def latest_t(self) -> int:
        return max((buf[-1].t for buf in self._buffers.values() if buf), default=0)


@dataclass(frozen=True)
class Thresholds:
    """Classifier tuning; every value may be overridden via gateway config."""

    speed_stationary_mps: float = 0.3
    speed_walking_max_mps: float = 2.5
    speed_vehicle_min_mps: float = 6.0
    walk_accel_stddev: float = 0.6
    stable_accel_stddev: float = 0.15
    stable_mean_lo: float = 9.31
    stable_mean_hi: float = 10.31
    noise_quiet_db: float = -40.0
    noise_loud_db: float = -20.0
    rotation_rate_dps: float = 30.0
    light_dark_lux: float = 10.0
    light_dim_lux: float = 100.0
    light_normal_lux: float = 1000.0
    window_ms: int = 5000

    def __post_init__(self):
        if not 0 <= self.speed_stationary_mps <= self.speed_walking_max_mps <= self.speed_vehicle_min_mps:
            raise ValueError("speed bands must be ordered: stationary <= walking_max <= vehicle_min")
        if not 0 < self.light_dark_lux < self.light_dim_lux < self.light_normal_lux:
            raise ValueError("light bands must be ordered: dark < dim < normal")
        if self.noise_quiet_db >= self.noise_loud_db:
            raise ValueError("noise_quiet_db must be below noise_loud_db")
        for name in ("walk_accel_stddev", "stable_accel_stddev", "rotation_rate_dps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")

    @classmethod
    def from_dict(cls, overrides: dict) -> "Thresholds":
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown threshold keys: {sorted(unknown)}")
        return cls(**overrides)


DEFAULT_THRESHOLDS = Thresholds()


def _haversine_m(a: GpsSample, b: GpsSample) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def _gps_speeds(samples: tuple[GpsSample, ...]) -> list[float]:
    """Per-sample speeds: explicit speed_mps when reported, otherwise derived
    from the great-circle distance to the previous fix."""
    speeds = []
    for i, s in enumerate(samples):
        if s.speed_mps is not None:
            speeds.append(s.speed_mps)
        elif i > 0:
            dt = (s.t - samples[i - 1].t) / 1000.0
            if dt > 0:
                speeds.append(_haversine_m(samples[i - 1], s) / dt)
    return speeds


def _accel_stats(samples) -> tuple[float, float] | None:
    if len(samples) < 2:
        return None
    magnitudes = [s.magnitude for s in samples]
    return statistics.mean(magnitudes), statistics.pstdev(magnitudes)


def classify_movement(window: SensorWindow, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> Movement:
    """Stationary / walking / vehicle from GPS speed, with the accelerometer
    breaking ties in the ambiguous speed band between walking and vehicle."""
    gps = window.gps
    if len(gps) < 2:
        return Movement.UNKNOWN
    speeds = _gps_speeds(gps)
    if not speeds:
        return Movement.UNKNOWN
    speed = statistics.median(speeds)
    if speed < thresholds.speed_stationary_mps:
        return Movement.STATIONARY
    if speed <= thresholds.speed_walking_max_mps:
        return Movement.WALKING
    if speed > thresholds.speed_vehicle_min_mps:
        return Movement.VEHICLE
    stats = _accel_stats(window.accel)
    if stats is None:
        return Movement.UNKNOWN
    _, stddev = stats
    return Movement.WALKING if stddev > thresholds.walk_accel_stddev else Movement.VEHICLE


def noise_level(
    window: SensorWindow, thresholds: Thresholds = DEFAULT_THRESHOLDS
) -> tuple[float | None, NoiseLevel]:
    """Mean capture level in dBFS over the window, banded quiet/moderate/loud."""
    audio = window.audio
    if not audio:
        return None, NoiseLevel.UNKNOWN
    mean_rms = statistics.mean(s.rms for s in audio)
    db = NOISE_FLOOR_DB if mean_rms <= 0 else max(20 * math.log10(mean_rms), NOISE_FLOOR_DB)
    return db, noise_band(db, thresholds)


def noise_band(db: float, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> NoiseLevel:
    if db < thresholds.noise_quiet_db:
        return NoiseLevel.QUIET
    if db <= thresholds.noise_loud_db:
        return NoiseLevel.MODERATE
    return NoiseLevel.LOUD


def surface_stability(window: SensorWindow, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> bool | None:
    """True when acceleration magnitude is steady and near gravity."""
    accel = window.accel
    if len(accel) < 3:
        return None
    mean, stddev = _accel_stats(accel)
    return stddev < thresholds.stable_accel_stddev and thresholds.stable_mean_lo <= mean <= thresholds.stable_mean_hi


def rotation_trend(window: SensorWindow, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> bool | None:
    """True when the wrap-aware azimuth rate over any consecutive pair exceeds
    the rotation threshold."""
    orient = window.orient
    if len(orient) < 2:
        return None
    max_rate = 0.0
    for prev, cur in zip(orient, orient[1:]):
        dt = (cur.t - prev.t) / 1000.0
        if dt <= 0:
            continue
        delta = ((cur.azimuth - prev.azimuth + 540.0) % 360.0) - 180.0
        max_rate = max(max_rate, abs(delta) / dt)
    return max_rate > thresholds.rotation_rate_dps


def light_level(
    window: SensorWindow, thresholds: Thresholds = DEFAULT_THRESHOLDS
) -> tuple[float | None, LightLevel]:
    """Latest illuminance, banded dark/dim/normal/bright."""
    light = window.light
    if not light:
        return None, LightLevel.UNKNOWN
    lux = light[-1].lux
    return lux, light_band(lux, thresholds)


def light_band(lux: float, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> LightLevel:
    if lux < thresholds.light_dark_lux:
        return LightLevel.DARK
    if lux < thresholds.light_dim_lux:
        return LightLevel.DIM
    if lux < thresholds.light_normal_lux:
        return LightLevel.NORMAL
    return LightLevel.BRIGHT


@dataclass(frozen=True)
class ContextState:
    """The fused snapshot served to consumers. noise is set iff noise_db is;
    light is set iff lux is; seq strictly increases across published states."""

    movement: Movement = Movement.UNKNOWN
    noise_db: float | None = None
    noise: NoiseLevel = NoiseLevel.UNKNOWN
    stable_surface: bool | None = None
    rotating: bool | None = None
    lux: float | None = None
    light: LightLevel = LightLevel.UNKNOWN
    zones: dict = field(default_factory=dict)
    networks: Fingerprint = field(default_factory=Fingerprint)
    seq: int = 0
    updated_at: int = 0

    def __post_init__(self):
        if (self.noise_db is None) != (self.noise is NoiseLevel.UNKNOWN):
            raise ValueError("noise level set iff noise_db set")
        if (self.lux is None) != (self.light is LightLevel.UNKNOWN):
            raise ValueError("light level set iff lux set")

    def to_json_dict(self) -> dict:
        return {
            "seq": self.seq,
            "updated_at": self.updated_at,
            "movement": self.movement.value,
            "noise_db": self.noise_db,
            "noise": self.noise.value,
            "stable_surface": self.stable_surface,
            "rotating": self.rotating,
            "lux": self.lux,
            "light": self.light.value,
            "zones": dict(sorted(self.zones.items())),
            "networks": json.loads(serialize_fingerprint(self.networks)),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ContextState":
        """Rebuild a state from its wire form; missing keys default to the
        unknown/absent values so hand-written context files can stay minimal."""
        networks = obj.get("networks", [])
        noise_db = float(obj["noise_db"]) if obj.get("noise_db") is not None else None
        lux = float(obj["lux"]) if obj.get("lux") is not None else None
        if "noise" in obj:
            noise = NoiseLevel(obj["noise"])
        else:
            noise = noise_band(noise_db) if noise_db is not None else NoiseLevel.UNKNOWN
        if "light" in obj:
            light = LightLevel(obj["light"])
        else:
            light = light_band(lux) if lux is not None else LightLevel.UNKNOWN
        return cls(
            movement=Movement(obj.get("movement", "UNKNOWN")),
            noise_db=noise_db,
            noise=noise,
            stable_surface=obj.get("stable_surface"),
            rotating=obj.get("rotating"),
            lux=lux,
            light=light,
            zones={str(k): bool(v) for k, v in obj.get("zones", {}).items()},
            networks=parse_fingerprint(json.dumps(networks)),
            seq=int(obj.get("seq", 0)),
            updated_at=int(obj.get("updated_at", 0)),
        )


def build_context(
    window: SensorWindow,
    networks: Fingerprint,
    predicates: dict[str, ProximityPredicate],
    match_states: dict[str, MatchState],
    prev_seq: int,
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
    now_ms: int | None = None,
) -> tuple[ContextState, dict[str, MatchState]]:
    """Run every classifier and predicate matcher and assemble the next state.

    Returns the state (seq = prev_seq + 1) plus the advanced per-predicate
    match states; zone keys are exactly the registered predicate ids.
    """
    seq = prev_seq + 1
    new_states: dict[str, MatchState] = {}
    zones: dict[str, bool] = {}
    for pred_id, predicate in predicates.items():
        state = match_states.get(pred_id, MatchState())
        state = advance_match(state, match_raw(networks, predicate), predicate, seq)
        new_states[pred_id] = state
        zones[pred_id] = state.matched
    noise_db, noise = noise_level(window, thresholds)
    lux, light = light_level(window, thresholds)
    if now_ms is None:
        now_ms = max(window.latest_t(), networks.captured_at)
    return (
        ContextState(
            movement=classify_movement(window, thresholds),
            noise_db=noise_db,
            noise=noise,
            stable_surface=surface_stability(window, thresholds),
            rotating=rotation_trend(window, thresholds),
            lux=lux,
            light=light,
            zones=zones,
            networks=networks,
            seq=seq,
            updated_at=now_ms,
        ),
        new_states,
    )


@dataclass(frozen=True)
class ScanPayload:
    """One device report: a fingerprint and/or a batch of sensor samples."""

    fingerprint: Fingerprint | None = None
    sensors: tuple = ()
    source: str = ""

    def __post_init__(self):
        if self.fingerprint is None and not self.sensors:
            raise ValueError("scan payload needs a fingerprint or sensors")
        object.__setattr__(self, "sensors", tuple(self.sensors))

    def to_json_dict(self) -> dict:
        obj: dict = {}
        if self.source:
            obj["source"] = self.source
        if self.fingerprint is not None:
            obj["fingerprint"] = json.loads(serialize_fingerprint(self.fingerprint))
            obj["captured_at"] = self.fingerprint.captured_at
        sensors: dict[str, list] = {}
        for s in self.sensors:
            if isinstance(s, GpsSample):
                entry = {"lat": s.lat, "lon": s.lon, "t": s.t}
                if s.speed_mps is not None:
                    entry["speed_mps"] = s.speed_mps
                sensors.setdefault("gps", []).append(entry)
            elif isinstance(s, AccelSample):
                sensors.setdefault("accel", []).append({"ax": s.ax, "ay": s.ay, "az": s.az, "t": s.t})
            elif isinstance(s, OrientSample):
                sensors.setdefault("orient", []).append(
                    {"azimuth": s.azimuth, "pitch": s.pitch, "roll": s.roll, "t": s.t}
                )
            elif isinstance(s, AudioSample):
                sensors.setdefault("audio", []).append({"rms": s.rms, "t": s.t})
            elif isinstance(s, LightSample):
                sensors.setdefault("light", []).append({"lux": s.lux, "t": s.t})
        if sensors:
            obj["sensors"] = sensors
        return obj

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ScanPayload":
        if not isinstance(obj, dict):
            raise ValueError("scan payload must be a JSON object")
        fingerprint = None
        if "fingerprint" in obj:
            raw = obj["fingerprint"]
            if not isinstance(raw, list):
                raise ValueError("fingerprint must be a JSON array")
            captured_at = obj.get("captured_at")
            if captured_at is None:
                captured_at = max((int(o.get("observed_at", 0)) for o in raw if isinstance(o, dict)), default=0)
            fingerprint = parse_fingerprint(json.dumps(raw), captured_at=int(captured_at))
        sensors: list = []
        raw_sensors = obj.get("sensors", {})
        if not isinstance(raw_sensors, dict):
            raise ValueError("sensors must be a JSON object of per-kind lists")
        builders = {
            "gps": lambda e: GpsSample(
                lat=float(e["lat"]), lon=float(e["lon"]), t=int(e["t"]),
                speed_mps=float(e["speed_mps"]) if e.get("speed_mps") is not None else None,
            ),
            "accel": lambda e: AccelSample(float(e["ax"]), float(e["ay"]), float(e["az"]), int(e["t"])),
            "orient": lambda e: OrientSample(float(e["azimuth"]), float(e["pitch"]), float(e["roll"]), int(e["t"])),
            "audio": lambda e: AudioSample(float(e["rms"]), int(e["t"])),
            "light": lambda e: LightSample(float(e["lux"]), int(e["t"])),
        }
        for kind, entries in raw_sensors.items():
            build = builders.get(kind)
            if build is None:
                raise ValueError(f"unknown sensor kind {kind!r}")
            if not isinstance(entries, list):
                raise ValueError(f"sensor {kind!r} must be a list")
            for i, entry in enumerate(entries):
                try:
                    sensors.append(build(entry))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"sensor {kind}[{i}]: {exc}") from None
        return cls(fingerprint=fingerprint, sensors=tuple(sensors), source=str(obj.get("source", "")))
