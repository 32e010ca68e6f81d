"""Wireless-network fingerprints: the SSID/MAC/RSSI data model, its JSON wire
form, and debounced proximity matching.

A fingerprint is the set of wireless nodes visible in one scan. Proximity to a
place is inferred from which nodes are visible and how strong they are, never
from connecting to them. Matching is two-threshold (enter at ``min_rssi``,
exit ``exit_margin_db`` below it) with a dwell requirement of consecutive
scans, so a node hovering at the threshold does not flap the match.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, replace

__all__ = [
    "NodeKind",
    "MatchBy",
    "PredicateMode",
    "NetworkObservation",
    "Fingerprint",
    "NodeCondition",
    "ProximityPredicate",
    "MatchState",
    "MatchOutcome",
    "FingerprintError",
    "FingerprintParseError",
    "FingerprintValidationError",
    "canonical_mac",
    "parse_fingerprint",
    "serialize_fingerprint",
    "match_raw",
    "advance_match",
    "predicates_from_json",
    "predicates_to_json",
]

RSSI_MIN = -120
RSSI_MAX = 0

_MAC_CANONICAL = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")
_MAC_BARE = re.compile(r"^[0-9a-f]{12}$")
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class FingerprintError(ValueError):
    """Base class for fingerprint wire-format and validation failures."""


class FingerprintParseError(FingerprintError):
    """Malformed JSON; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


class FingerprintValidationError(FingerprintError):
    """Structurally valid JSON with bad content; names the element index."""

    def __init__(self, message: str, index: int | None = None):
        if index is not None:
            message = f"element {index}: {message}"
        super().__init__(message)
        self.index = index


class NodeKind(enum.Enum):
    WIFI = "WIFI"
    BLE = "BLE"
    BT_CLASSIC = "BT_CLASSIC"


class MatchBy(enum.Enum):
    MAC = "MAC"
    SSID = "SSID"


class PredicateMode(enum.Enum):
    ANY = "ANY"
    ALL = "ALL"


def canonical_mac(text: str) -> str:
    """Normalize a MAC address to six lowercase colon-separated hex octets.

    Accepts colon- or dash-separated octets and bare 12-hex-digit strings.
    Idempotent. Raises ValueError for anything else.
    """
    mac = text.strip().lower().replace("-", ":")
    if _MAC_BARE.match(mac):
        mac = ":".join(mac[i : i + 2] for i in range(0, 12, 2))
    if not _MAC_CANONICAL.match(mac):
        raise ValueError(f"invalid mac address: {text!r}")
    return mac


@dataclass(frozen=True)
class NetworkObservation:
    """One sighted wireless node: SSID, MAC, RSSI, radio kind, and scan time."""

    ssid: str
    mac: str
    rssi: int
    kind: NodeKind = NodeKind.WIFI
    observed_at: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mac", canonical_mac(self.mac))
        if not isinstance(self.rssi, int) or not RSSI_MIN <= self.rssi <= RSSI_MAX:
            raise ValueError(f"rssi {self.rssi!r} outside [{RSSI_MIN}, {RSSI_MAX}] dBm")


@dataclass(frozen=True)
class Fingerprint:
    """A timestamped set of observations, unique per (mac, kind), held in
    canonical order (mac, then kind) so serialization is deterministic."""

    observations: tuple[NetworkObservation, ...] = ()
    captured_at: int = 0

    def __post_init__(self):
        obs = tuple(sorted(self.observations, key=lambda o: (o.mac, o.kind.value)))
        keys = [(o.mac, o.kind) for o in obs]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (mac, kind) in fingerprint")
        object.__setattr__(self, "observations", obs)

    @classmethod
    def from_observations(cls, observations, captured_at: int = 0) -> "Fingerprint":
        """Build a fingerprint, deduplicating (mac, kind) by strongest rssi."""
        best: dict[tuple[str, NodeKind], NetworkObservation] = {}
        for o in observations:
            key = (o.mac, o.kind)
            kept = best.get(key)
            if kept is None or o.rssi > kept.rssi:
                best[key] = o
        return cls(tuple(best.values()), captured_at)

    def node_keys(self) -> frozenset[tuple[str, NodeKind]]:
        return frozenset((o.mac, o.kind) for o in self.observations)


_FIELD_ALIASES = {"ssid": "ssid", "mac": "mac", "rssi": "rssi", "kind": "kind", "observed_at": "observed_at"}


def _observation_from_obj(obj, index: int) -> NetworkObservation:
    if not isinstance(obj, dict):
        raise FingerprintValidationError("expected a JSON object", index)
    fields: dict[str, object] = {}
    for key, value in obj.items():
        name = _FIELD_ALIASES.get(str(key).lower())
        if name:
            fields[name] = value
    for required in ("mac", "rssi"):
        if required not in fields:
            raise FingerprintValidationError(f"missing key {required.upper()}", index)
    ssid = fields.get("ssid", "")
    if not isinstance(ssid, str):
        raise FingerprintValidationError("SSID must be a string", index)
    rssi = fields["rssi"]
    if isinstance(rssi, float) and rssi.is_integer():
        rssi = int(rssi)
    if not isinstance(rssi, int) or isinstance(rssi, bool):
        raise FingerprintValidationError("RSSI must be an integer", index)
    kind_raw = fields.get("kind", "WIFI")
    try:
        kind = NodeKind(str(kind_raw).upper())
    except ValueError:
        raise FingerprintValidationError(f"unknown kind {kind_raw!r}", index) from None
    observed_at = fields.get("observed_at", 0)
    if not isinstance(observed_at, int) or isinstance(observed_at, bool):
        raise FingerprintValidationError("observed_at must be an integer", index)
    try:
        return NetworkObservation(ssid=ssid, mac=str(fields["mac"]), rssi=rssi, kind=kind, observed_at=observed_at)
    except ValueError as exc:
        raise FingerprintValidationError(str(exc), index) from None


def parse_fingerprint(text: str, captured_at: int = 0) -> Fingerprint:
    """Parse the wire form: a JSON array of {SSID, MAC, RSSI, ...} objects.

    Keys are case-insensitive; kind defaults to WIFI and observed_at to 0.
    Duplicate (mac, kind) entries keep the strongest rssi. Malformed JSON
    raises FingerprintParseError with the byte offset; bad element content
    raises FingerprintValidationError naming the element index.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[: exc.pos].encode("utf-8"))
        raise FingerprintParseError(exc.msg, byte_offset) from None
    if not isinstance(data, list):
        raise FingerprintValidationError("fingerprint must be a JSON array")
    observations = [_observation_from_obj(obj, i) for i, obj in enumerate(data)]
    return Fingerprint.from_observations(observations, captured_at)


def serialize_fingerprint(fp: Fingerprint) -> str:
    """Serialize to the wire form, elements in canonical order, using the
    uppercase SSID/MAC/RSSI key names."""
    return json.dumps([_observation_to_obj(o) for o in fp.observations])


def _observation_to_obj(o: NetworkObservation) -> dict:
    return {"SSID": o.ssid, "MAC": o.mac, "RSSI": o.rssi, "kind": o.kind.value, "observed_at": o.observed_at}


@dataclass(frozen=True)
class NodeCondition:
    """Matches observations by exact MAC or by SSID (exact or ``*``-suffix
    prefix), optionally filtered by radio kind, at or above ``min_rssi``."""

    match_by: MatchBy
    pattern: str
    min_rssi: int = -90
    kind: NodeKind | None = None

    def __post_init__(self):
        if not RSSI_MIN <= self.min_rssi <= RSSI_MAX:
            raise ValueError(f"min_rssi {self.min_rssi} outside [{RSSI_MIN}, {RSSI_MAX}] dBm")
        if self.match_by is MatchBy.MAC:
            object.__setattr__(self, "pattern", canonical_mac(self.pattern))

    def matches_node(self, obs: NetworkObservation) -> bool:
        """Pattern/kind match only; rssi thresholds are applied by the caller."""
        if self.kind is not None and obs.kind is not self.kind:
            return False
        if self.match_by is MatchBy.MAC:
            return obs.mac == self.pattern
        if self.pattern.endswith("*"):
            return obs.ssid.startswith(self.pattern[:-1])
        return obs.ssid == self.pattern


@dataclass(frozen=True)
class ProximityPredicate:
    """A named proximity condition over nodes with hysteresis parameters."""

    id: str
    conditions: tuple[NodeCondition, ...]
    mode: PredicateMode = PredicateMode.ANY
    exit_margin_db: int = 5
    dwell_scans: int = 2

    def __post_init__(self):
        if not _IDENT.match(self.id):
            raise ValueError(f"predicate id {self.id!r} is not a valid identifier")
        if not self.conditions:
            raise ValueError(f"predicate {self.id!r} has no conditions")
        if self.exit_margin_db < 0:
            raise ValueError("exit_margin_db must be non-negative")
        if self.dwell_scans < 1:
            raise ValueError("dwell_scans must be positive")
        object.__setattr__(self, "conditions", tuple(self.conditions))


@dataclass(frozen=True)
class MatchState:
    """Debounced match status: ``streak`` counts consecutive scans supporting
    a pending transition and always stays below the predicate's dwell."""

    matched: bool = False
    streak: int = 0
    last_transition_seq: int = 0


@dataclass(frozen=True)
class MatchOutcome:
    """Raw (un-debounced) result of matching one fingerprint against one
    predicate: enter/exit satisfaction plus per-condition best rssi."""

    satisfied_enter: bool
    satisfied_exit: bool
    per_condition_best_rssi: tuple[int | None, ...]


def match_raw(fp: Fingerprint, predicate: ProximityPredicate) -> MatchOutcome:
    """Evaluate enter/exit satisfaction of a predicate against one scan.

    A condition is enter-satisfied iff some observation matches its
    pattern/kind with rssi >= min_rssi, and exit-satisfied at the relaxed
    threshold min_rssi - exit_margin_db. ANY/ALL folds across conditions.
    """
    enters: list[bool] = []
    exits: list[bool] = []
    bests: list[int | None] = []
    for cond in predicate.conditions:
        best: int | None = None
        for obs in fp.observations:
            if cond.matches_node(obs) and (best is None or obs.rssi > best):
                best = obs.rssi
        bests.append(best)
        enters.append(best is not None and best >= cond.min_rssi)
        exits.append(best is not None and best >= cond.min_rssi - predicate.exit_margin_db)
    fold = any if predicate.mode is PredicateMode.ANY else all
    return MatchOutcome(fold(enters), fold(exits), tuple(bests))


def advance_match(
    state: MatchState,
    outcome: MatchOutcome,
    predicate: ProximityPredicate,
    seq: int,
) -> MatchState:
    """Advance the debounced state by one scan outcome.

    Entering requires dwell_scans consecutive enter-satisfied outcomes;
    leaving requires dwell_scans consecutive exit-unsatisfied outcomes. Any
    contrary outcome resets the pending streak. ``seq`` stamps transitions.
    """
    if not state.matched:
        supports = outcome.satisfied_enter
    else:
        supports = not outcome.satisfied_exit
    if not supports:
        if state.streak == 0:
            return state
        return replace(state, streak=0)
    streak = state.streak + 1
    if streak >= predicate.dwell_scans:
        return MatchState(matched=not state.matched, streak=0, last_transition_seq=seq)
    return replace(state, streak=streak)


# Predicate file wire form: JSON array of objects with camelCase keys
# (id, conditions[{matchBy, pattern, minRssi, kind}], mode, exitMarginDb,
# dwellScans).


def _condition_from_obj(obj: dict, pred_id: str) -> NodeCondition:
    try:
        match_by = MatchBy(str(obj["matchBy"]).upper())
    except KeyError:
        raise FingerprintValidationError(f"predicate {pred_id!r}: condition missing matchBy") from None
    except ValueError:
        raise FingerprintValidationError(f"predicate {pred_id!r}: bad matchBy {obj['matchBy']!r}") from None
    if "pattern" not in obj:
        raise FingerprintValidationError(f"predicate {pred_id!r}: condition missing pattern")
    kind = obj.get("kind")
    try:
        return NodeCondition(
            match_by=match_by,
            pattern=str(obj["pattern"]),
            min_rssi=int(obj.get("minRssi", -90)),
            kind=NodeKind(str(kind).upper()) if kind is not None else None,
        )
    except ValueError as exc:
        raise FingerprintValidationError(f"predicate {pred_id!r}: {exc}") from None


def predicates_from_json(text: str) -> list[ProximityPredicate]:
    """Load a predicate file: a JSON array of predicate objects."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FingerprintParseError(exc.msg, len(text[: exc.pos].encode("utf-8"))) from None
    if not isinstance(data, list):
        raise FingerprintValidationError("predicate file must be a JSON array")
    predicates = []
    seen: set[str] = set()
    for obj in data:
        if not isinstance(obj, dict) or "id" not in obj:
            raise FingerprintValidationError("each predicate needs an id")
        pred_id = str(obj["id"])
        if pred_id in seen:
            raise FingerprintValidationError(f"duplicate predicate id {pred_id!r}")
        seen.add(pred_id)
        conditions = obj.get("conditions")
        if not isinstance(conditions, list) or not conditions:
            raise FingerprintValidationError(f"predicate {pred_id!r}: conditions must be a non-empty array")
        try:
            predicates.append(
                ProximityPredicate(
                    id=pred_id,
                    conditions=tuple(_condition_from_obj(c, pred_id) for c in conditions),
                    mode=PredicateMode(str(obj.get("mode", "ANY")).upper()),
                    exit_margin_db=int(obj.get("exitMarginDb", 5)),
                    dwell_scans=int(obj.get("dwellScans", 2)),
                )
            )
        except ValueError as exc:
            raise FingerprintValidationError(str(exc)) from None
    return predicates


def predicates_to_json(predicates) -> str:
    def cond_obj(c: NodeCondition) -> dict:
        obj = {"matchBy": c.match_by.value, "pattern": c.pattern, "minRssi": c.min_rssi}
        if c.kind is not None:
            obj["kind"] = c.kind.value
        return obj

    return json.dumps(
        [
            {
                "id": p.id,
                "conditions": [cond_obj(c) for c in p.conditions],
                "mode": p.mode.value,
                "exitMarginDb": p.exit_margin_db,
                "dwellScans": p.dwell_scans,
            }
            for p in predicates
        ],
        indent=2,
    )
