"""
Item-interaction query profiles and query-to-query similarity.

Two queries are considered close when shoppers engaged with the same items after
issuing them. Sparse profiles fall back to token overlap.
"""
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional

from .errors import CorruptSnapshot, EmptyAfterNormalization, EmptyProfile, InvalidConfig
from .event_log import Session, normalize_query
from .utils import iter_jsonl, write_jsonl

logger = logging.getLogger(__name__)

# (q1, q2) -> score in [0, 1]; any callable of this shape can replace QuerySimilarity
SimilarityFn = Callable[[str, str], float]


@dataclass
class QueryItemProfile:
    query: str
    items: Counter = field(default_factory=Counter)

    def __len__(self):
        return len(self.items)

    def to_dict(self):
        return {"q": self.query, "items": {item: self.items[item] for item in sorted(self.items)}}

    @classmethod
    def from_dict(cls, data):
        items = data["items"]
        if not isinstance(data["q"], str) or not isinstance(items, dict):
            raise ValueError("profile must carry a string 'q' and an 'items' object")
        for item, count in items.items():
            if isinstance(count, bool) or not isinstance(count, int) or count < 1:
                raise ValueError(f"item {item!r} has invalid count {count!r}")
        return cls(data["q"], Counter(items))


@dataclass(frozen=True)
class SimilarityConfig:
    min_profile_items: int = 3
    blend_alpha: float = 0.7

    def __post_init__(self):
        if self.min_profile_items < 1:
            raise InvalidConfig(f"min_profile_items must be >= 1, got {self.min_profile_items}")
        if not 0.0 <= self.blend_alpha <= 1.0:
            raise InvalidConfig(f"blend_alpha must be in [0, 1], got {self.blend_alpha}")


class ProfileAccumulator:
    """Mergeable per-shard profile builder."""

    def __init__(self):
        self._profiles: Dict[str, QueryItemProfile] = {}

    def add_session(self, session: Session):
        active_query: Optional[str] = None
        for event in session.events:
            if event.is_query:
                try:
                    active_query = normalize_query(event.query_text)
                except EmptyAfterNormalization:
                    active_query = None
            elif event.is_interaction and active_query is not None:
                profile = self._profiles.get(active_query)
                if profile is None:
                    profile = self._profiles[active_query] = QueryItemProfile(active_query)
                profile.items[event.item_id] += 1

    def merge(self, other: "ProfileAccumulator"):
        for query, theirs in other._profiles.items():
            profile = self._profiles.get(query)
            if profile is None:
                profile = self._profiles[query] = QueryItemProfile(query)
            profile.items.update(theirs.items)
        return self

    def result(self) -> Dict[str, QueryItemProfile]:
        return {q: self._profiles[q] for q in sorted(self._profiles)}


def build_profiles(sessions: Iterable[Session]) -> Dict[str, QueryItemProfile]:
    """
    Attribute every click and bbowac event to the most recent query in its session.

    Interactions that happen before any query are dropped.
    """
    accumulator = ProfileAccumulator()
    for session in sessions:
        accumulator.add_session(session)
    profiles = accumulator.result()
    logger.info(f"Built {len(profiles)} query profiles")
    return profiles


def _jaccard(a, b):
    union = len(a | b)
    if union == 0:
        return 1.0
    return len(a & b) / union


def sim_items(p1: QueryItemProfile, p2: QueryItemProfile) -> float:
    """Jaccard similarity of the two profiles' item-id sets."""
    if not p1.items or not p2.items:
        raise EmptyProfile("Both profiles must contain at least one item")
    return _jaccard(set(p1.items), set(p2.items))


def sim_tokens(q1: str, q2: str) -> float:
    """Jaccard similarity of whitespace token sets; two empty queries score 1.0."""
    t1, t2 = set(q1.split()), set(q2.split())
    if not t1 and not t2:
        return 1.0
    if not t1 or not t2:
        return 0.0
    return _jaccard(t1, t2)


def similarity(q1, q2, profiles, cfg: SimilarityConfig) -> float:
    """
    Blend item similarity with token similarity.

    When both queries have profiles with at least cfg.min_profile_items items the
    score is ``alpha * sim_items + (1 - alpha) * sim_tokens``; otherwise it is
    sim_tokens alone.
    """
    token_score = sim_tokens(q1, q2)
    p1, p2 = profiles.get(q1), profiles.get(q2)
    if (
        p1 is not None
        and p2 is not None
        and len(p1) >= cfg.min_profile_items
        and len(p2) >= cfg.min_profile_items
    ):
        score = cfg.blend_alpha * sim_items(p1, p2) + (1.0 - cfg.blend_alpha) * token_score
    else:
        score = token_score
    return min(1.0, max(0.0, score))


class QuerySimilarity:
    """Callable SimilarityFn backed by a fixed profile map."""

    def __init__(self, profiles: Optional[Dict[str, QueryItemProfile]] = None, config: Optional[SimilarityConfig] = None):
        self.profiles = profiles or {}
        self.config = config or SimilarityConfig()

    def __call__(self, q1, q2):
        return similarity(q1, q2, self.profiles, self.config)


def write_profiles(path, profiles):
    return write_jsonl(path, (profiles[q].to_dict() for q in sorted(profiles)))


def read_profiles(path) -> Dict[str, QueryItemProfile]:
    profiles = {}
    for line_number, text in iter_jsonl(path):
        try:
            profile = QueryItemProfile.from_dict(json.loads(text))
        except (ValueError, KeyError, TypeError) as e:
            raise CorruptSnapshot(line_number, str(e))
        profiles[profile.query] = profile
    return profiles
