"""
Query chain mining and journey aggregation.

A session is cut after every bbowac event. Each resulting segment that ends in a
conversion and holds at least two distinct-run queries becomes a QueryChain.
Chains are then folded into JourneyContext records keyed by transitional query.
"""
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from .errors import CorruptSnapshot, EmptyAfterNormalization, InvalidConfig
from .event_log import RawEvent, Session, normalize_query
from .utils import iter_jsonl, write_jsonl

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QueryChain:
    queries: Tuple[str, ...]
    terminal_converted: bool = True
    terminal_items: FrozenSet[str] = frozenset()

    def __len__(self):
        return len(self.queries)

    @property
    def source(self):
        return self.queries[0]

    @property
    def converging(self):
        return self.queries[-1]

    def to_dict(self):
        return {
            "queries": list(self.queries),
            "converted": self.terminal_converted,
            "items": sorted(self.terminal_items),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            queries=tuple(data["queries"]),
            terminal_converted=bool(data.get("converted", True)),
            terminal_items=frozenset(data.get("items", [])),
        )


@dataclass
class JourneyContext:
    transitional_query: str
    source_queries: Counter = field(default_factory=Counter)
    converging_queries: Counter = field(default_factory=Counter)
    support: int = 0

    def ranked_sources(self):
        return _ranked(self.source_queries)

    def ranked_convergings(self):
        return _ranked(self.converging_queries)

    def to_dict(self):
        return {
            "t": self.transitional_query,
            "sources": dict(self.ranked_sources()),
            "convergings": dict(self.ranked_convergings()),
            "support": self.support,
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data["sources"], dict) or not isinstance(data["convergings"], dict):
            raise ValueError("journey must carry 'sources' and 'convergings' objects")
        journey = cls(
            transitional_query=data["t"],
            source_queries=Counter(data["sources"]),
            converging_queries=Counter(data["convergings"]),
            support=data["support"],
        )
        journey.validate()
        return journey

    def validate(self):
        if not isinstance(self.transitional_query, str) or not self.transitional_query:
            raise ValueError("transitional query must be a non-empty string")
        if isinstance(self.support, bool) or not isinstance(self.support, int) or self.support < 1:
            raise ValueError(f"support must be an integer >= 1, got {self.support!r}")
        for name, counts in (("sources", self.source_queries), ("convergings", self.converging_queries)):
            for query, count in counts.items():
                if not isinstance(query, str) or isinstance(count, bool) or not isinstance(count, int) or count < 1:
                    raise ValueError(f"{name} entry {query!r}: {count!r} is not a positive count")
        if self.transitional_query in self.converging_queries:
            raise ValueError("transitional query must not be one of its converging queries")


def _ranked(counts):
    """Entries ordered by count descending, then query ascending."""
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def segment_session(session: Session) -> List[List[RawEvent]]:
    """
    Cut a session's events immediately after every bbowac event.

    A trailing segment without a bbowac is still returned; extract_chain drops it.
    """
    segments: List[List[RawEvent]] = []
    current: List[RawEvent] = []
    for event in session.events:
        current.append(event)
        if event.is_bbowac:
            segments.append(current)
            current = []
    if current:
        segments.append(current)
    return segments


def extract_chain(segment: List[RawEvent]) -> Optional[QueryChain]:
    """
    Turn one segment into a converted QueryChain.

    Returns:
        QueryChain or None: None when the segment does not end in a bbowac event
        or holds fewer than two distinct-run queries.
    """
    if not segment or not segment[-1].is_bbowac:
        return None

    queries: List[str] = []
    last_query_index = -1
    for index, event in enumerate(segment):
        if not event.is_query:
            continue
        try:
            query = normalize_query(event.query_text)
        except EmptyAfterNormalization:
            continue
        last_query_index = index
        if not queries or queries[-1] != query:
            queries.append(query)

    if len(queries) < 2:
        return None

    terminal_items = frozenset(
        event.item_id for event in segment[last_query_index + 1:] if event.is_interaction
    )
    return QueryChain(tuple(queries), terminal_converted=True, terminal_items=terminal_items)


def mine_chains(sessions: Iterable[Session]) -> List[QueryChain]:
    chains: List[QueryChain] = []
    segments_seen = 0
    for session in sessions:
        for segment in segment_session(session):
            segments_seen += 1
            chain = extract_chain(segment)
            if chain is not None:
                chains.append(chain)
    logger.info(f"Mined {len(chains)} converted chains from {segments_seen} segments")
    return chains


class JourneyAccumulator:
    """
    Mergeable accumulation of chains into journey contexts.

    add() and merge() commute, so shards can be folded in any order.
    """

    def __init__(self):
        self._journeys: Dict[str, JourneyContext] = {}

    def __len__(self):
        return len(self._journeys)

    def add(self, chain: QueryChain):
        queries = chain.queries
        if len(queries) < 2:
            return
        source, converging = queries[0], queries[-1]
        # a two-query chain is keyed by its source
        transitionals = {source} if len(queries) == 2 else set(queries[1:-1])
        for transitional in transitionals:
            if transitional == converging:
                continue
            journey = self._journeys.get(transitional)
            if journey is None:
                journey = self._journeys[transitional] = JourneyContext(transitional)
            journey.source_queries[source] += 1
            journey.converging_queries[converging] += 1
            journey.support += 1

    def merge(self, other: "JourneyAccumulator"):
        for transitional, theirs in other._journeys.items():
            journey = self._journeys.get(transitional)
            if journey is None:
                journey = self._journeys[transitional] = JourneyContext(transitional)
            journey.source_queries.update(theirs.source_queries)
            journey.converging_queries.update(theirs.converging_queries)
            journey.support += theirs.support
        return self

    def result(self) -> Dict[str, JourneyContext]:
        return {t: self._journeys[t] for t in sorted(self._journeys)}


def aggregate_journeys(chains: Iterable[QueryChain]) -> Dict[str, JourneyContext]:
    """
    Aggregate chains into JourneyContext records keyed by transitional query.

    For a chain [q1, ..., qn] every interior query q2..q(n-1) receives q1 as a
    source and qn as a converging query; a two-query chain is keyed by q1.
    """
    accumulator = JourneyAccumulator()
    for chain in chains:
        accumulator.add(chain)
    return accumulator.result()


def _truncate(counts, limit):
    return Counter(dict(_ranked(counts)[:limit]))


def prune_journeys(journeys, min_support=1, max_sources=10, max_convergings=10):
    """
    Drop weakly supported journeys and keep the top-k sources and convergings.

    Raises:
        InvalidConfig: If min_support < 1 or a limit is < 1.
    """
    if min_support < 1:
        raise InvalidConfig(f"min_support must be >= 1, got {min_support}")
    if max_sources < 1 or max_convergings < 1:
        raise InvalidConfig("max_sources and max_convergings must be >= 1")

    pruned = {}
    for transitional, journey in journeys.items():
        if journey.support < min_support:
            continue
        pruned[transitional] = JourneyContext(
            transitional,
            source_queries=_truncate(journey.source_queries, max_sources),
            converging_queries=_truncate(journey.converging_queries, max_convergings),
            support=journey.support,
        )
    logger.info(f"Kept {len(pruned)} of {len(journeys)} journeys (min_support={min_support})")
    return pruned


def mined_suggestions(journey: JourneyContext) -> List[Tuple[str, int]]:
    """Converging queries ranked by count, ties broken lexicographically."""
    return _ranked(journey.converging_queries)


def write_journeys(path, journeys):
    return write_jsonl(path, (journeys[t].to_dict() for t in sorted(journeys)))


def read_journeys(path) -> Dict[str, JourneyContext]:
    journeys = {}
    for line_number, text in iter_jsonl(path):
        try:
            journey = JourneyContext.from_dict(json.loads(text))
        except (ValueError, KeyError, TypeError) as e:
            raise CorruptSnapshot(line_number, str(e))
        journeys[journey.transitional_query] = journey
    return journeys


def write_chains(path, chains):
    return write_jsonl(path, (chain.to_dict() for chain in chains))


def read_chains(path) -> List[QueryChain]:
    chains = []
    for line_number, text in iter_jsonl(path):
        try:
            chains.append(QueryChain.from_dict(json.loads(text)))
        except (ValueError, KeyError, TypeError) as e:
            raise CorruptSnapshot(line_number, str(e))
    return chains
