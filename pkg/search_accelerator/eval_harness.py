"""
Offline replay of related-search impressions.

Rates use impressions as the denominator for both metrics:
ctr = clicks / impressions, cvr = conversions / impressions.

The synthetic click model is a cascade: the shopper scans suggestions top-down,
examines position i with probability ``position_decay ** i`` and clicks an
examined suggestion with probability ``base_click * quality``, where quality
mixes similarity to the anchor with novelty against the sibling suggestions
(1 - max similarity to any sibling). A click converts with probability
``base_convert * quality``. The first click ends the impression.
"""
import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Protocol, Sequence

import numpy as np
import pandas as pd

from .errors import InvalidConfig, ZeroBaseline
from .query_repr import SimilarityFn, sim_tokens
from .utils import iter_jsonl, write_jsonl

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImpressionEvent:
    anchor_query: str
    shown: tuple
    clicked_index: Optional[int] = None
    converted: bool = False

    def __post_init__(self):
        if self.clicked_index is not None and not 0 <= self.clicked_index < len(self.shown):
            raise InvalidConfig(f"clicked_index {self.clicked_index} outside the {len(self.shown)} shown suggestions")
        if self.converted and self.clicked_index is None:
            raise InvalidConfig("an impression cannot convert without a click")

    def to_dict(self):
        return {
            "anchor": self.anchor_query,
            "shown": list(self.shown),
            "clicked": self.clicked_index,
            "converted": self.converted,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["anchor"], tuple(data["shown"]), data.get("clicked"), bool(data.get("converted", False)))


@dataclass(frozen=True)
class MetricsReport:
    impressions: int = 0
    clicks: int = 0
    conversions: int = 0

    @property
    def ctr(self):
        return self.clicks / self.impressions if self.impressions else 0.0

    @property
    def cvr(self):
        return self.conversions / self.impressions if self.impressions else 0.0

    def __add__(self, other):
        return MetricsReport(
            self.impressions + other.impressions,
            self.clicks + other.clicks,
            self.conversions + other.conversions,
        )

    def to_dict(self):
        return {
            "impressions": self.impressions,
            "clicks": self.clicks,
            "conversions": self.conversions,
            "ctr": round(self.ctr, 6),
            "cvr": round(self.cvr, 6),
        }


@dataclass(frozen=True)
class DeltaReport:
    ctr_delta_pct: float
    cvr_delta_pct: float

    def to_dict(self):
        return {"ctr_delta_pct": self.ctr_delta_pct, "cvr_delta_pct": self.cvr_delta_pct}


def compute_metrics(events) -> MetricsReport:
    impressions = clicks = conversions = 0
    for event in events:
        impressions += 1
        if event.clicked_index is not None:
            clicks += 1
            if event.converted:
                conversions += 1
    return MetricsReport(impressions, clicks, conversions)


def relative_delta(variant: MetricsReport, baseline: MetricsReport) -> DeltaReport:
    """
    Percentage change of each rate against the baseline, to one decimal place.

    Raises:
        ZeroBaseline: If a baseline rate is zero.
    """
    if baseline.ctr == 0 or baseline.cvr == 0:
        raise ZeroBaseline("baseline ctr and cvr must both be positive")
    return DeltaReport(
        round(100.0 * (variant.ctr - baseline.ctr) / baseline.ctr, 1),
        round(100.0 * (variant.cvr - baseline.cvr) / baseline.cvr, 1),
    )


def format_delta(value):
    if value is None:
        return "n/a"
    if round(value, 1) == 0:
        return "0.0%"
    return f"{value:+.1f}%"


class ClickModel(Protocol):
    def click_probability(self, anchor: str, shown: Sequence[str], position: int) -> float:
        ...

    def convert_probability(self, anchor: str, shown: Sequence[str], position: int) -> float:
        ...


@dataclass(frozen=True)
class ConstantClickModel:
    p_click: float = 0.0
    p_convert: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.p_click <= 1.0 and 0.0 <= self.p_convert <= 1.0):
            raise InvalidConfig("click and convert probabilities must be in [0, 1]")

    def click_probability(self, anchor, shown, position):
        return self.p_click

    def convert_probability(self, anchor, shown, position):
        return self.p_convert


class IntentDiversityClickModel:
    def __init__(self, sim: Optional[SimilarityFn] = None, base_click=0.6, base_convert=0.4,
                 position_decay=0.8, relevance_weight=0.5, novelty_weight=0.5):
        for name, value in (("base_click", base_click), ("base_convert", base_convert),
                            ("position_decay", position_decay), ("relevance_weight", relevance_weight),
                            ("novelty_weight", novelty_weight)):
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1], got {value}")
        if relevance_weight + novelty_weight > 1.0 + 1e-9:
            raise InvalidConfig("relevance_weight + novelty_weight must not exceed 1")
        self.sim = sim or sim_tokens
        self.base_click = base_click
        self.base_convert = base_convert
        self.position_decay = position_decay
        self.relevance_weight = relevance_weight
        self.novelty_weight = novelty_weight

    def quality(self, anchor, shown, position):
        suggestion = shown[position]
        relevance = self.sim(suggestion, anchor)
        siblings = [s for i, s in enumerate(shown) if i != position]
        novelty = 1.0 - max((self.sim(suggestion, s) for s in siblings), default=0.0)
        return self.relevance_weight * relevance + self.novelty_weight * novelty

    def click_probability(self, anchor, shown, position):
        return self.position_decay ** position * self.base_click * self.quality(anchor, shown, position)

    def convert_probability(self, anchor, shown, position):
        return self.base_convert * self.quality(anchor, shown, position)


def synthesize_replay(suggestion_set: Mapping[str, Sequence[str]], click_model: ClickModel,
                      n_impressions: int, rng_seed: int, max_shown: Optional[int] = None) -> List[ImpressionEvent]:
    """
    Sample impressions from a click model.

    Anchors are drawn uniformly from the anchors with at least one suggestion. Anchor
    draws and behavior draws use separate generators, so two suggestion sets over the
    same anchors see identical traffic for the same seed.

    Raises:
        InvalidConfig: On a negative impression count or an empty suggestion set.
    """
    if isinstance(n_impressions, bool) or not isinstance(n_impressions, int) or n_impressions < 0:
        raise InvalidConfig(f"n_impressions must be a non-negative integer, got {n_impressions!r}")
    if max_shown is not None and max_shown < 1:
        raise InvalidConfig(f"max_shown must be >= 1, got {max_shown}")
    anchors = sorted(a for a, shown in suggestion_set.items() if shown)
    if n_impressions and not anchors:
        raise InvalidConfig("suggestion set has no anchor with suggestions")

    anchor_rng = np.random.default_rng([rng_seed, 0])
    behavior_rng = np.random.default_rng([rng_seed, 1])

    probabilities: Dict[str, list] = {}
    for anchor in anchors:
        shown = tuple(suggestion_set[anchor][:max_shown] if max_shown else suggestion_set[anchor])
        probabilities[anchor] = [
            (click_model.click_probability(anchor, shown, i), click_model.convert_probability(anchor, shown, i))
            for i in range(len(shown))
        ]

    events: List[ImpressionEvent] = []
    picks = anchor_rng.integers(len(anchors), size=n_impressions) if n_impressions else []
    for pick in picks:
        anchor = anchors[int(pick)]
        shown = tuple(suggestion_set[anchor][:max_shown] if max_shown else suggestion_set[anchor])
        clicked, converted = None, False
        for position, (p_click, p_convert) in enumerate(probabilities[anchor]):
            if behavior_rng.random() < p_click:
                clicked = position
                converted = bool(behavior_rng.random() < p_convert)
                break
        events.append(ImpressionEvent(anchor, shown, clicked, converted))
    return events


def suggestion_sets(records, limit: Optional[int] = None) -> Dict[str, List[str]]:
    """Anchor -> shown suggestion texts for a list of SuggestionRecords, optionally truncated."""
    return {r.anchor_query: [a.query for a in r.alternates][:limit] for r in records}


def report_table(arms: Mapping[str, MetricsReport], deltas: Mapping[str, Optional[DeltaReport]]) -> str:
    """Render relative changes as an aligned text table (one row per variant arm)."""
    frame = pd.DataFrame(
        {
            "Click-through rate": [format_delta(d.ctr_delta_pct if d else None) for d in deltas.values()],
            "Conversions": [format_delta(d.cvr_delta_pct if d else None) for d in deltas.values()],
        },
        index=list(deltas.keys()),
    )
    metrics = pd.DataFrame(
        {name: [r.impressions, r.clicks, r.conversions, f"{r.ctr:.4f}", f"{r.cvr:.4f}"] for name, r in arms.items()},
        index=["impressions", "clicks", "conversions", "ctr", "cvr"],
    ).T
    return (
        "Relative performance\n" + frame.to_string() + "\n\nAbsolute metrics\n" + metrics.to_string() + "\n"
    )


def report_json(arms: Mapping[str, MetricsReport], deltas: Mapping[str, Optional[DeltaReport]]) -> str:
    payload = {
        "arms": {name: report.to_dict() for name, report in arms.items()},
        "deltas": {name: (d.to_dict() if d else None) for name, d in deltas.items()},
    }
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def write_impressions(path, events):
    return write_jsonl(path, (e.to_dict() for e in events))


def read_impressions(path) -> List[ImpressionEvent]:
    return [ImpressionEvent.from_dict(json.loads(text)) for _, text in iter_jsonl(path)]
