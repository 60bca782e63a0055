"""
Behavioral event log parsing, query normalization and session reconstruction.

Log lines are UTF-8 JSON objects::

    {"sid": "s1", "ts": 10, "kind": "query", "q": "iphone 12"}
    {"sid": "s1", "ts": 11, "kind": "click", "item": "i3"}
    {"sid": "s1", "ts": 12, "kind": "bbowac", "sub": "buy", "item": "i9"}
"""
import json
import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

from .errors import EmptyAfterNormalization, MalformedRecord

logger = logging.getLogger(__name__)

_WHITESPACE = re.compile(r"\s+")


class EventKind(str, Enum):
    QUERY = "query"
    CLICK = "click"
    BBOWAC = "bbowac"


class BbowacType(str, Enum):
    """Conversion signals: buy, bid, offer, watch, ask, cart click."""

    BUY = "buy"
    BID = "bid"
    OFFER = "offer"
    WATCH = "watch"
    ASK = "ask"
    CART = "cart"


@dataclass(frozen=True)
class RawEvent:
    session_id: str
    timestamp_ms: int
    kind: EventKind
    query_text: Optional[str] = None
    item_id: Optional[str] = None
    subtype: Optional[BbowacType] = None

    @property
    def is_query(self):
        return self.kind is EventKind.QUERY

    @property
    def is_interaction(self):
        return self.kind is EventKind.CLICK or self.kind is EventKind.BBOWAC

    @property
    def is_bbowac(self):
        return self.kind is EventKind.BBOWAC


@dataclass(frozen=True)
class Session:
    session_id: str
    events: Tuple[RawEvent, ...]

    def __len__(self):
        return len(self.events)


@dataclass
class EventLogStats:
    parsed: int = 0
    skipped: int = 0
    skipped_by_reason: Counter = field(default_factory=Counter)

    def record_skip(self, reason):
        self.skipped += 1
        self.skipped_by_reason[reason] += 1


def normalize_query(text):
    """
    Normalize query text for matching and de-duplication.

    Lowercases, applies Unicode NFC, keeps only letters, digits, spaces, hyphens
    and ampersands, and collapses whitespace runs. The operation is idempotent.

    Args:
        text (str): Raw query text.

    Returns:
        str: The normalized query.

    Raises:
        EmptyAfterNormalization: If nothing is left after normalization.
    """
    if not isinstance(text, str):
        raise EmptyAfterNormalization(f"Query must be a string, got {type(text).__name__}")
    lowered = unicodedata.normalize("NFC", text.lower())
    kept = "".join(
        " " if ch.isspace() else ch
        for ch in lowered
        if ch.isspace() or ch.isalnum() or ch in "-&"
    )
    normalized = unicodedata.normalize("NFC", _WHITESPACE.sub(" ", kept).strip())
    if not normalized:
        raise EmptyAfterNormalization(f"Query {text!r} is empty after normalization")
    return normalized


def _require_str(record, key, reason):
    value = record.get(key)
    if not isinstance(value, str) or not value:
        raise MalformedRecord(f"Field '{key}' must be a non-empty string", reason=reason)
    return value


def parse_event_line(line):
    """
    Parse one JSONL log line into a RawEvent.

    The query text is stored raw; it is only checked to survive normalization.

    Args:
        line (str): One log record.

    Returns:
        RawEvent: The validated event.

    Raises:
        MalformedRecord: On bad syntax, unknown kind or a missing required field.
    """
    try:
        record = json.loads(line)
    except (json.JSONDecodeError, TypeError) as e:
        raise MalformedRecord(f"Invalid JSON: {e}", reason="syntax")
    if not isinstance(record, dict):
        raise MalformedRecord("Record is not a JSON object", reason="syntax")

    session_id = _require_str(record, "sid", "missing_sid")

    ts = record.get("ts")
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise MalformedRecord("Field 'ts' must be an integer", reason="bad_ts")
    if ts < 0:
        raise MalformedRecord("Field 'ts' must be >= 0", reason="bad_ts")

    if "kind" not in record:
        raise MalformedRecord("Field 'kind' is missing", reason="missing_kind")
    try:
        kind = EventKind(record["kind"])
    except (ValueError, TypeError):
        raise MalformedRecord(f"Unknown kind {record['kind']!r}", reason="unknown_kind")

    if kind is EventKind.QUERY:
        query_text = _require_str(record, "q", "missing_query")
        try:
            normalize_query(query_text)
        except EmptyAfterNormalization:
            raise MalformedRecord("Query is empty after normalization", reason="empty_query")
        return RawEvent(session_id, ts, kind, query_text=query_text)

    item_id = _require_str(record, "item", "missing_item")
    if kind is EventKind.CLICK:
        return RawEvent(session_id, ts, kind, item_id=item_id)

    try:
        subtype = BbowacType(record.get("sub"))
    except (ValueError, TypeError):
        raise MalformedRecord(f"Unknown bbowac subtype {record.get('sub')!r}", reason="bad_subtype")
    return RawEvent(session_id, ts, kind, item_id=item_id, subtype=subtype)


def serialize_event(event):
    """Inverse of parse_event_line."""
    record = {"sid": event.session_id, "ts": event.timestamp_ms, "kind": event.kind.value}
    if event.kind is EventKind.QUERY:
        record["q"] = event.query_text
    else:
        record["item"] = event.item_id
        if event.kind is EventKind.BBOWAC:
            record["sub"] = event.subtype.value
    return json.dumps(record, ensure_ascii=False)


def _decode_line(line):
    if isinstance(line, str):
        return line
    try:
        return line.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedRecord(f"Line is not valid UTF-8: {e}", reason="encoding")


def read_events(lines: Iterable[Union[str, bytes]], stats: Optional[EventLogStats] = None) -> Iterator[RawEvent]:
    """
    Parse a stream of log lines, skipping and counting malformed ones.

    Args:
        lines: Iterable of raw lines, text or UTF-8 bytes (blank lines are ignored).
        stats: Optional counter object updated in place.

    Yields:
        RawEvent: Every valid event, in input order.
    """
    stats = stats if stats is not None else EventLogStats()
    for line_number, line in enumerate(lines, start=1):
        try:
            text = _decode_line(line)
            if not text.strip():
                continue
            event = parse_event_line(text)
        except MalformedRecord as e:
            stats.record_skip(e.reason)
            logger.debug(f"Skipping malformed line {line_number}: {e}")
            continue
        stats.parsed += 1
        yield event


def reconstruct_sessions(events: Iterable[RawEvent]) -> Iterator[Session]:
    """
    Group events into sessions.

    Sessions are emitted in first-seen order of their id; events inside a session
    are sorted by timestamp with ties kept in input order.
    """
    grouped: Dict[str, List[RawEvent]] = {}
    for event in events:
        grouped.setdefault(event.session_id, []).append(event)
    for session_id, session_events in grouped.items():
        # sorted() is stable, so equal timestamps keep their input order
        yield Session(session_id, tuple(sorted(session_events, key=lambda e: e.timestamp_ms)))


def load_sessions(path, stats: Optional[EventLogStats] = None) -> List[Session]:
    stats = stats if stats is not None else EventLogStats()
    with open(path, "rb") as f:
        sessions = list(reconstruct_sessions(read_events(f, stats)))
    logger.info(
        f"Read {stats.parsed} events into {len(sessions)} sessions from {path}; "
        f"skipped {stats.skipped} malformed lines {dict(stats.skipped_by_reason)}"
    )
    return sessions
