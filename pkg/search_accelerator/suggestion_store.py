"""
Suggestion records, their JSONL snapshot, and the read-only related-searches API.

    GET /related?q=<text>  -> 200 {"query": ..., "alternates": [{"q", "score", "provenance"}]}
                              404 {"error": "not_found"}
                              400 {"error": "empty_query"}
    GET /healthz           -> 200 {"status": "ok", "records": n}
"""
import asyncio
import contextlib
import json
import logging
import os
import threading
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Tuple

from aiohttp import web

from .errors import CorruptSnapshot, EmptyAfterNormalization, InvariantViolation
from .event_log import normalize_query
from .utils import dumps_line, iter_jsonl, write_jsonl

logger = logging.getLogger(__name__)


class Provenance(str, Enum):
    LLM = "llm"
    MINED = "mined"


@dataclass(frozen=True)
class Alternate:
    query: str
    score: float
    provenance: Provenance

    def to_dict(self):
        return {"q": self.query, "score": self.score, "provenance": self.provenance.value}


@dataclass(frozen=True)
class SuggestionRecord:
    anchor_query: str
    alternates: Tuple[Alternate, ...]
    built_at_ms: int = 0
    support: int = 1

    def validate(self):
        """
        Check the record invariants.

        Raises:
            InvariantViolation: If the anchor is not normalized, alternates are empty,
                scores increase, or the anchor is among its own alternates.
        """
        try:
            if normalize_query(self.anchor_query) != self.anchor_query:
                raise InvariantViolation(f"anchor {self.anchor_query!r} is not normalized")
        except (EmptyAfterNormalization, AttributeError):
            raise InvariantViolation(f"anchor {self.anchor_query!r} is empty")
        if not self.alternates:
            raise InvariantViolation(f"record {self.anchor_query!r} has no alternates")
        previous = None
        for alternate in self.alternates:
            if not isinstance(alternate.query, str) or not alternate.query:
                raise InvariantViolation(f"record {self.anchor_query!r} has an empty alternate")
            if alternate.query == self.anchor_query:
                raise InvariantViolation(f"anchor {self.anchor_query!r} is one of its alternates")
            if not isinstance(alternate.score, (int, float)) or not 0.0 <= alternate.score <= 1.0:
                raise InvariantViolation(f"score {alternate.score!r} is outside [0, 1]")
            if previous is not None and alternate.score > previous:
                raise InvariantViolation(f"scores of {self.anchor_query!r} are not non-increasing")
            if not isinstance(alternate.provenance, Provenance):
                raise InvariantViolation(f"unknown provenance {alternate.provenance!r}")
            previous = alternate.score
        if isinstance(self.built_at_ms, bool) or not isinstance(self.built_at_ms, int) or self.built_at_ms < 0:
            raise InvariantViolation(f"built_at_ms {self.built_at_ms!r} is not a non-negative integer")
        if isinstance(self.support, bool) or not isinstance(self.support, int) or self.support < 1:
            raise InvariantViolation(f"support {self.support!r} must be an integer >= 1")
        return self

    def with_built_at(self, built_at_ms):
        return SuggestionRecord(self.anchor_query, self.alternates, built_at_ms, self.support)

    def to_dict(self):
        return {
            "anchor": self.anchor_query,
            "alternates": [a.to_dict() for a in self.alternates],
            "built_at": self.built_at_ms,
            "support": self.support,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            alternates = tuple(
                Alternate(a["q"], a["score"], Provenance(a["provenance"])) for a in data["alternates"]
            )
            record = cls(data["anchor"], alternates, data["built_at"], data["support"])
        except (KeyError, TypeError, ValueError) as e:
            raise InvariantViolation(f"malformed record: {e}")
        return record.validate()


class SuggestionStore:
    """
    Read-mostly anchor -> record map.

    Readers always see one complete snapshot: every write builds a new immutable
    mapping and swaps the reference.
    """

    def __init__(self, records: Iterable[SuggestionRecord] = ()):
        self._write_lock = threading.Lock()
        self._snapshot: Mapping[str, SuggestionRecord] = MappingProxyType({})
        self.replace_all(records)

    def __len__(self):
        return len(self._snapshot)

    def __eq__(self, other):
        return isinstance(other, SuggestionStore) and dict(self._snapshot) == dict(other._snapshot)

    @property
    def current(self) -> Mapping[str, SuggestionRecord]:
        return self._snapshot

    def records(self):
        snapshot = self._snapshot
        return [snapshot[anchor] for anchor in sorted(snapshot)]

    def replace_all(self, records: Iterable[SuggestionRecord]):
        fresh = {}
        for record in records:
            fresh[record.validate().anchor_query] = record
        with self._write_lock:
            self._snapshot = MappingProxyType(fresh)

    def put(self, record: SuggestionRecord):
        """Insert or overwrite the record for its anchor (last write wins)."""
        record.validate()
        with self._write_lock:
            fresh = dict(self._snapshot)
            fresh[record.anchor_query] = record
            self._snapshot = MappingProxyType(fresh)

    def get(self, anchor_query) -> Optional[SuggestionRecord]:
        try:
            key = normalize_query(anchor_query)
        except EmptyAfterNormalization:
            return None
        return self._snapshot.get(key)

    def snapshot(self, path):
        """Write all records as JSONL sorted by anchor."""
        count = write_jsonl(path, (record.to_dict() for record in self.records()))
        logger.info(f"Wrote {count} suggestion records to {path}")
        return count

    @staticmethod
    def read_snapshot(path):
        records = []
        for line_number, text in iter_jsonl(path):
            try:
                records.append(SuggestionRecord.from_dict(json.loads(text)))
            except (ValueError, TypeError) as e:
                raise CorruptSnapshot(line_number, str(e))
        return records

    @classmethod
    def load(cls, path):
        store = cls(cls.read_snapshot(path))
        logger.info(f"Loaded {len(store)} suggestion records from {path}")
        return store

    def reload(self, path):
        """Parse a snapshot fully, then swap it in; a corrupt file leaves the store untouched."""
        records = self.read_snapshot(path)
        self.replace_all(records)
        logger.info(f"Reloaded {len(self)} suggestion records from {path}")
        return len(self)


def related_payload(record: SuggestionRecord):
    return {"query": record.anchor_query, "alternates": [a.to_dict() for a in record.alternates]}


def _json(payload, status=200):
    return web.Response(text=dumps_line(payload), status=status, content_type="application/json")


STORE_KEY = web.AppKey("store", SuggestionStore)


async def related(request):
    store = request.app[STORE_KEY]
    try:
        query = normalize_query(request.query.get("q", ""))
    except EmptyAfterNormalization:
        return _json({"error": "empty_query"}, status=400)
    snapshot = store.current
    record = snapshot.get(query)
    if record is None:
        return _json({"error": "not_found"}, status=404)
    return _json(related_payload(record))


async def healthz(request):
    return _json({"status": "ok", "records": len(request.app[STORE_KEY].current)})


def _snapshot_watcher(store, path, interval_s):
    async def watch(app):
        async def poll():
            last_mtime = os.stat(path).st_mtime_ns if os.path.exists(path) else None
            while True:
                await asyncio.sleep(interval_s)
                try:
                    mtime = os.stat(path).st_mtime_ns
                except OSError:
                    continue
                if mtime == last_mtime:
                    continue
                last_mtime = mtime
                try:
                    store.reload(path)
                except (CorruptSnapshot, OSError) as e:
                    logger.error(f"Snapshot reload failed, keeping previous snapshot: {e}")

        task = asyncio.ensure_future(poll())
        yield
        task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await task

    return watch


def create_app(store: SuggestionStore, snapshot_path=None, reload_interval_s=0.0):
    app = web.Application()
    app[STORE_KEY] = store
    app.router.add_get("/related", related)
    app.router.add_get("/healthz", healthz)
    if snapshot_path and reload_interval_s > 0:
        app.cleanup_ctx.append(_snapshot_watcher(store, snapshot_path, reload_interval_s))
    return app


def parse_bind_address(bind_address):
    host, _, port = bind_address.rpartition(":")
    return host or "127.0.0.1", int(port)


def serve(store: SuggestionStore, bind_address="127.0.0.1:8080", snapshot_path=None, reload_interval_s=0.0):
    """Run the related-searches API until interrupted."""
    host, port = parse_bind_address(bind_address)
    logger.info(f"Serving {len(store)} suggestion records on http://{host}:{port}")
    web.run_app(create_app(store, snapshot_path, reload_interval_s), host=host, port=port, print=None)


def build_records(candidates: Iterable[SuggestionRecord], built_at_ms: int):
    """Stamp candidate records with their build time."""
    return [candidate.with_built_at(built_at_ms) for candidate in candidates]
