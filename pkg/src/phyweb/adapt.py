"""Context-driven HTML adaptation.

Elements opt in through ``data-phyweb-when="EXPR"``, the shorthand
``data-phyweb-zone="ID"`` (sugar for ``zone(ID)``), an external bindings map
from element id to expression, or the legacy ``<ami_adaptation
environment="EXPR">`` tag accepted read-only for compatibility.

The scanner is a tolerant tag-level pass over the raw bytes, not a tree
builder: comments and doctypes are skipped, script/style bodies are opaque,
and an annotated element's span runs from its start tag to the end tag found
by depth-counting the same tag name. Documents whose annotated elements
cannot be matched (or whose sites would partially overlap) are rejected, not
repaired. All edits are byte-span splices, so untouched bytes survive
verbatim.

In CSS mode a false site's start tag gains the ``phyweb-hidden`` class (and a
single style block is inserted); in PRUNE mode false sites are removed
outright, outermost first. A site whose expression fails to parse or evaluate
is hidden: that is the safe default.
"""

from __future__ import annotations

import enum
import html as html_entities
import json
import re
from dataclasses import dataclass, field
from typing import NamedTuple
from urllib.parse import quote, urlsplit, urlunsplit, parse_qsl

from .context import ContextState
from .fingerprint import Fingerprint
from .ruledsl import Node, RuleError, evaluate, parse as parse_rule

__all__ = [
    "AdaptMode",
    "RuleSource",
    "RuleSite",
    "SiteRef",
    "AdaptReport",
    "HtmlStructureError",
    "HIDDEN_CLASS",
    "STYLE_BLOCK",
    "extract_rules",
    "adapt",
    "enrich_url",
    "EnrichedUrl",
    "load_bindings",
]

HIDDEN_CLASS = "phyweb-hidden"
STYLE_BLOCK = "<style>.phyweb-hidden{display:none !important}</style>"

WHEN_ATTR = "data-phyweb-when"
ZONE_ATTR = "data-phyweb-zone"
LEGACY_TAG = "ami_adaptation"

VOID_ELEMENTS = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)
OPAQUE_ELEMENTS = frozenset(("script", "style"))


class HtmlStructureError(ValueError):
    """Unmatched or interleaved annotated elements; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


class AdaptMode(enum.Enum):
    CSS = "css"
    PRUNE = "prune"


class RuleSource(enum.Enum):
    ATTR_WHEN = "ATTR_WHEN"
    ATTR_ZONE = "ATTR_ZONE"
    BINDING = "BINDING"


@dataclass(frozen=True)
class _Attr:
    name: str
    value: str
    span: tuple[int, int]        # whole attribute, ws-trimmed start
    value_span: tuple[int, int] | None  # raw value bytes, inside quotes
    quoted: bool


@dataclass(frozen=True)
class _TagEvent:
    name: str
    start: int
    end: int            # past '>'
    closing: bool
    self_closing: bool
    attrs: tuple[_Attr, ...]
    insert_at: int      # where ' attr' text may be inserted ('>' or '/>')

    def attr(self, name: str) -> _Attr | None:
        for a in self.attrs:
            if a.name == name:
                return a
        return None


@dataclass(frozen=True)
class RuleSite:
    """One adaptation block: the element span, where its rule came from, and
    the parsed expression (or the parse failure, with the site skipped)."""

    element_span: tuple[int, int]
    tag_name: str
    source: RuleSource
    expr_text: str
    ast: Node | None
    element_id: str | None = None
    error: str | None = None
    start_tag: _TagEvent | None = field(default=None, compare=False, repr=False)


class SiteRef(NamedTuple):
    """Report handle for a site: its id when it has one, else its span."""

    id: str | None
    span: tuple[int, int]
    expr: str

    def to_json_dict(self) -> dict:
        return {"id": self.id, "span": list(self.span), "expr": self.expr}


@dataclass
class AdaptReport:
    mode: AdaptMode
    shown: list[SiteRef] = field(default_factory=list)
    hidden: list[SiteRef] = field(default_factory=list)
    errors: list[tuple[SiteRef, str]] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "shown": [s.to_json_dict() for s in self.shown],
            "hidden": [s.to_json_dict() for s in self.hidden],
            "errors": [{**ref.to_json_dict(), "message": msg} for ref, msg in self.errors],
        }


def load_bindings(text: str) -> dict[str, str]:
    """Bindings file: a JSON object mapping element id to expression text.
    Every expression must parse."""
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("bindings must be a JSON object of id -> expression")
    bindings: dict[str, str] = {}
    for element_id, expr in data.items():
        if not isinstance(expr, str):
            raise ValueError(f"binding {element_id!r}: expression must be a string")
        parse_rule(expr)  # raises RuleError with offset on failure
        bindings[str(element_id)] = expr
    return bindings


_WS = b" \t\n\r\f"
_NAME_END = b" \t\n\r\f/>"
_TAG_NAME = re.compile(rb"[a-zA-Z][a-zA-Z0-9_:-]*")


def _scan_tags(data: bytes) -> list[_TagEvent]:
    """Tolerant single pass over the byte stream yielding tag events.

    UTF-8 continuation bytes are >= 0x80, so scanning for ASCII '<' on raw
    bytes is safe and every offset is a true byte offset.
    """
    events: list[_TagEvent] = []
    i = 0
    n = len(data)
    while i < n:
        lt = data.find(b"<", i)
        if lt < 0:
            break
        if data.startswith(b"<!--", lt):
            close = data.find(b"-->", lt + 4)
            i = n if close < 0 else close + 3
            continue
        if data.startswith(b"<!", lt) or data.startswith(b"<?", lt):
            close = data.find(b">", lt)
            i = n if close < 0 else close + 1
            continue
        closing = data.startswith(b"</", lt)
        name_start = lt + (2 if closing else 1)
        match = _TAG_NAME.match(data, name_start)
        if not match:
            i = lt + 1  # stray '<' in text
            continue
        name = match.group().decode("ascii").lower()
        j = match.end()
        attrs: list[_Attr] = []
        self_closing = False
        while j < n:
            while j < n and data[j : j + 1] in _WS:
                j += 1
            if j >= n:
                break
            if data[j : j + 1] == b">":
                break
            if data[j : j + 2] == b"/>":
                self_closing = True
                break
            if data[j : j + 1] == b"/":
                j += 1
                continue
            attr_start = j
            while j < n and data[j : j + 1] not in b"= \t\n\r\f/>":
                j += 1
            attr_name = data[attr_start:j].decode("utf-8", "replace").lower()
            while j < n and data[j : j + 1] in _WS:
                j += 1
            value = ""
            value_span = None
            quoted = False
            if j < n and data[j : j + 1] == b"=":
                j += 1
                while j < n and data[j : j + 1] in _WS:
                    j += 1
                if j < n and data[j : j + 1] in b"\"'":
                    quote_ch = data[j : j + 1]
                    vs = j + 1
                    ve = data.find(quote_ch, vs)
                    if ve < 0:
                        ve = n
                    value_span = (vs, ve)
                    value = html_entities.unescape(data[vs:ve].decode("utf-8", "replace"))
                    quoted = True
                    j = min(ve + 1, n)
                else:
                    vs = j
                    while j < n and data[j : j + 1] not in _NAME_END:
                        j += 1
                    value_span = (vs, j)
                    value = html_entities.unescape(data[vs:j].decode("utf-8", "replace"))
            if attr_name:
                attrs.append(_Attr(attr_name, value, (attr_start, j), value_span, quoted))
        insert_at = j
        gt = data.find(b">", j)
        if gt < 0:
            break  # truncated tag at EOF; nothing more to scan
        end = gt + 1
        if data[gt - 1 : gt] == b"/" and not closing:
            self_closing = True
            insert_at = min(insert_at, gt - 1)
        else:
            insert_at = gt
        events.append(_TagEvent(name, lt, end, closing, self_closing, tuple(attrs), insert_at))
        i = end
        if not closing and name in OPAQUE_ELEMENTS and not self_closing:
            close_pat = b"</" + name.encode()
            low = data.lower()
            close = low.find(close_pat, i)
            i = n if close < 0 else close
    return events


def _match_end(events: list[_TagEvent], start_index: int) -> _TagEvent | None:
    """Find the end tag closing events[start_index] by same-name depth count."""
    name = events[start_index].name
    depth = 1
    for event in events[start_index + 1 :]:
        if event.name != name:
            continue
        if event.closing:
            depth -= 1
            if depth == 0:
                return event
        elif not event.self_closing and name not in VOID_ELEMENTS:
            depth += 1
    return None


def _zone_expr(zone_id: str) -> str:
    return f"zone({zone_id})"


def extract_rules(html: str, bindings: dict[str, str] | None = None) -> list[RuleSite]:
    """Collect adaptation sites in document order.

    An element with several rule sources contributes one site; precedence is
    data-phyweb-when, then data-phyweb-zone, then the external binding. A
    site whose expression does not parse is returned with ``error`` set and
    ``ast`` None. Raises HtmlStructureError when an annotated element has no
    matching end tag or two sites would partially overlap.
    """
    bindings = bindings or {}
    data = html.encode("utf-8")
    events = _scan_tags(data)
    sites: list[RuleSite] = []
    for index, event in enumerate(events):
        if event.closing:
            continue
        source = None
        expr_text = None
        when = event.attr(WHEN_ATTR)
        zone = event.attr(ZONE_ATTR)
        legacy = event.attr("environment") if event.name == LEGACY_TAG else None
        id_attr = event.attr("id")
        element_id = id_attr.value if id_attr else None
        if when is not None:
            source, expr_text = RuleSource.ATTR_WHEN, when.value
        elif legacy is not None:
            source, expr_text = RuleSource.ATTR_WHEN, legacy.value
        elif zone is not None:
            source, expr_text = RuleSource.ATTR_ZONE, _zone_expr(zone.value)
        elif element_id is not None and element_id in bindings:
            source, expr_text = RuleSource.BINDING, bindings[element_id]
        if source is None:
            continue
        if event.self_closing or event.name in VOID_ELEMENTS:
            span = (event.start, event.end)
        else:
            end_tag = _match_end(events, index)
            if end_tag is None:
                raise HtmlStructureError(
                    f"no matching </{event.name}> for annotated element", event.start
                )
            span = (event.start, end_tag.end)
        ast = None
        error = None
        try:
            ast = parse_rule(expr_text)
        except RuleError as exc:
            error = str(exc)
        sites.append(
            RuleSite(
                element_span=span,
                tag_name=event.name,
                source=source,
                expr_text=expr_text,
                ast=ast,
                element_id=element_id,
                error=error,
                start_tag=event,
            )
        )
    sites.sort(key=lambda s: s.element_span)
    for a, b in zip(sites, sites[1:]):
        if a.element_span[1] > b.element_span[0] and a.element_span[1] < b.element_span[1]:
            raise HtmlStructureError("annotated elements interleave", b.element_span[0])
    return sites


def _site_ref(site: RuleSite) -> SiteRef:
    return SiteRef(site.element_id, site.element_span, site.expr_text)


def _class_edits(data: bytes, tag: _TagEvent, hide: bool) -> list[tuple[int, int, bytes]]:
    """Byte splices that add or remove the hidden class on one start tag."""
    attr = tag.attr("class")
    tokens = attr.value.split() if attr else []
    present = HIDDEN_CLASS in tokens
    if hide and not present:
        if attr is None or attr.value_span is None:
            return [(tag.insert_at, tag.insert_at, f' class="{HIDDEN_CLASS}"'.encode())]
        vs, ve = attr.value_span
        new_value = " ".join(tokens + [HIDDEN_CLASS])
        if attr.quoted:
            return [(vs, ve, html_entities.escape(new_value, quote=True).encode())]
        return [(vs, ve, b'"' + html_entities.escape(new_value, quote=True).encode() + b'"')]
    if not hide and present:
        remaining = [t for t in tokens if t != HIDDEN_CLASS]
        if remaining and attr.value_span is not None:
            vs, ve = attr.value_span
            return [(vs, ve, html_entities.escape(" ".join(remaining), quote=True).encode())]
        start, end = attr.span
        while start > 0 and data[start - 1 : start] in _WS:  # drop the attr and leading ws
            start -= 1
        return [(start, end, b"")]
    return []


def adapt(
    html: str,
    state: ContextState,
    fingerprint: Fingerprint | None = None,
    mode: AdaptMode = AdaptMode.CSS,
    bindings: dict[str, str] | None = None,
) -> tuple[str, AdaptReport]:
    """Evaluate every site against the state and rewrite the document.

    Returns the adapted text and a report whose shown/hidden sets reflect
    effective visibility (a site inside a hidden ancestor is hidden no matter
    what its own expression says); the sets are identical across modes.
    """
    if fingerprint is None:
        fingerprint = state.networks
    sites = extract_rules(html, bindings)
    report = AdaptReport(mode=mode)
    if not sites:
        return html, report
    data = html.encode("utf-8")

    own_value: list[bool] = []
    for site in sites:
        if site.error is not None:
            own_value.append(False)
            report.errors.append((_site_ref(site), site.error))
            continue
        try:
            own_value.append(evaluate(site.ast, state, fingerprint))
        except RuleError as exc:
            own_value.append(False)
            report.errors.append((_site_ref(site), str(exc)))

    # effective visibility: own value and every enclosing site's
    effective: list[bool] = []
    for i, site in enumerate(sites):
        visible = own_value[i]
        for j, outer in enumerate(sites[:i]):
            if outer.element_span[0] < site.element_span[0] and site.element_span[1] <= outer.element_span[1]:
                visible = visible and effective[j]
        effective.append(visible)
        (report.shown if visible else report.hidden).append(_site_ref(site))

    edits: list[tuple[int, int, bytes]] = []
    if mode is AdaptMode.CSS:
        for i, site in enumerate(sites):
            edits.extend(_class_edits(data, site.start_tag, hide=not own_value[i]))
        style = STYLE_BLOCK.encode()
        if style not in data:
            at = _style_insert_at(data)
            edits.append((at, at, style))
    else:
        removed_until = -1
        for i, site in enumerate(sites):
            start, end = site.element_span
            if start < removed_until:
                continue  # inside a removed ancestor; already reported above
            if not own_value[i]:
                edits.append((start, end, b""))
                removed_until = end

    out = _splice(data, edits)
    return out.decode("utf-8"), report


def _style_insert_at(data: bytes) -> int:
    """Immediately before </head>, or document start when there is none."""
    for event in _scan_tags(data):
        if event.closing and event.name == "head":
            return event.start
    return 0


def _splice(data: bytes, edits: list[tuple[int, int, bytes]]) -> bytes:
    edits = sorted(edits, key=lambda e: (e[0], e[1]))
    out = bytearray()
    cursor = 0
    for start, end, replacement in edits:
        out += data[cursor:start]
        out += replacement
        cursor = end
    out += data[cursor:]
    return bytes(out)


class EnrichedUrl(NamedTuple):
    url: str
    ok: bool


_PW_PARAMS = ("pw_move", "pw_noise_db", "pw_light", "pw_zones")


def enrich_url(url: str, state: ContextState) -> EnrichedUrl:
    """Append the known context as pw_* query parameters, in a fixed order.

    Unknown facets are omitted; a URL already carrying any pw_ parameter is
    returned unchanged, so re-application is a no-op. An unparseable URL is
    returned unchanged with ok=False.
    """
    try:
        parts = urlsplit(url)
    except ValueError:
        return EnrichedUrl(url, ok=False)
    existing = {name for name, _ in parse_qsl(parts.query, keep_blank_values=True)}
    if existing & set(_PW_PARAMS):
        return EnrichedUrl(url, ok=True)
    params: list[tuple[str, str]] = []
    if state.movement.value != "UNKNOWN":
        params.append(("pw_move", state.movement.value))
    if state.noise_db is not None:
        params.append(("pw_noise_db", str(round(state.noise_db))))
    if state.light.value != "UNKNOWN":
        params.append(("pw_light", state.light.value))
    true_zones = sorted(zone for zone, inside in state.zones.items() if inside)
    if true_zones:
        params.append(("pw_zones", ",".join(true_zones)))
    if not params:
        return EnrichedUrl(url, ok=True)
    encoded = "&".join(f"{name}={quote(value, safe=',')}" for name, value in params)
    query = f"{parts.query}&{encoded}" if parts.query else encoded
    return EnrichedUrl(urlunsplit((parts.scheme, parts.netloc, parts.path, query, parts.fragment)), ok=True)
