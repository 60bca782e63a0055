import json
import random
from collections import Counter

import pytest

from search_accelerator.errors import CorruptSnapshot, InvalidConfig
from search_accelerator.event_log import BbowacType, EventKind, RawEvent, Session
from search_accelerator.sequence_miner import (
    JourneyAccumulator,
    JourneyContext,
    QueryChain,
    aggregate_journeys,
    extract_chain,
    mine_chains,
    mined_suggestions,
    prune_journeys,
    read_chains,
    read_journeys,
    segment_session,
    write_chains,
    write_journeys,
)


def q(ts, text, sid="s1"):
    return RawEvent(sid, ts, EventKind.QUERY, query_text=text)


def click(ts, item, sid="s1"):
    return RawEvent(sid, ts, EventKind.CLICK, item_id=item)


def buy(ts, item, sid="s1"):
    return RawEvent(sid, ts, EventKind.BBOWAC, item_id=item, subtype=BbowacType.BUY)


def af_session():
    events = [q(1, "a"), q(2, "b"), q(3, "c"), q(4, "d"), buy(5, "i1"), q(6, "e"), q(7, "f"), buy(8, "i2")]
    return Session("s1", tuple(events))


def test_segment_cuts_after_each_bbowac():
    segments = segment_session(af_session())
    assert len(segments) == 2
    assert [e.query_text for e in segments[0] if e.is_query] == ["a", "b", "c", "d"]
    assert [e.query_text for e in segments[1] if e.is_query] == ["e", "f"]


def test_segment_without_bbowac_is_whole_session():
    session = Session("s1", (q(1, "a"), click(2, "i"), q(3, "b")))
    assert segment_session(session) == [list(session.events)]


def test_segment_bbowac_last_gives_one_segment():
    session = Session("s1", (q(1, "a"), q(2, "b"), buy(3, "i")))
    assert len(segment_session(session)) == 1


def test_extract_chain_from_two_conversion_session():
    chains = [extract_chain(segment) for segment in segment_session(af_session())]
    assert [c.queries for c in chains] == [("a", "b", "c", "d"), ("e", "f")]
    assert all(c.terminal_converted for c in chains)
    assert chains[0].terminal_items == frozenset({"i1"})


def test_extract_chain_collapses_consecutive_duplicates():
    chain = extract_chain([q(1, "a"), q(2, "A "), q(3, "b"), buy(4, "i")])
    assert chain.queries == ("a", "b")


def test_extract_chain_needs_two_queries():
    assert extract_chain([q(1, "a"), buy(2, "i")]) is None


def test_extract_chain_needs_bbowac_terminal():
    assert extract_chain([q(1, "a"), q(2, "b"), click(3, "i")]) is None


def test_terminal_items_follow_last_query():
    chain = extract_chain([q(1, "a"), click(2, "early"), q(3, "b"), click(4, "late"), buy(5, "bought")])
    assert chain.terminal_items == frozenset({"late", "bought"})


def test_mine_chains_over_sessions():
    chains = mine_chains([af_session(), Session("s2", (q(1, "x"), click(2, "i")))])
    assert len(chains) == 2


def test_aggregate_counting():
    chains = [QueryChain(("a", "t", "c1")), QueryChain(("b", "t", "c2"))]
    journeys = aggregate_journeys(chains)
    t = journeys["t"]
    assert t.source_queries == Counter({"a": 1, "b": 1})
    assert t.converging_queries == Counter({"c1": 1, "c2": 1})
    assert t.support == 2


def test_aggregate_gold_journey(gold_journey):
    chains = [
        QueryChain(("18k gold dacid yarmen", "18k gold diamonds necklace", "david yurman chain gold 18k")),
        QueryChain(("david yurman chain gold 18k", "18k gold diamonds necklace", "18k gold david yurman")),
    ]
    journeys = aggregate_journeys(chains)
    assert journeys["18k gold diamonds necklace"] == gold_journey


def test_aggregate_empty():
    assert aggregate_journeys([]) == {}


def test_two_query_chain_is_keyed_by_source():
    journeys = aggregate_journeys([QueryChain(("e", "f"))])
    assert list(journeys) == ["e"]
    assert journeys["e"].converging_queries == Counter({"f": 1})


def test_transitional_equal_to_converging_is_skipped():
    journeys = aggregate_journeys([QueryChain(("a", "c", "b", "c"))])
    assert "c" not in journeys
    assert journeys["b"].converging_queries == Counter({"c": 1})


def test_journey_invariants_on_random_chains():
    rng = random.Random(5)
    vocab = [f"q{i}" for i in range(8)]
    chains = []
    for _ in range(300):
        queries = [rng.choice(vocab) for _ in range(rng.randint(2, 6))]
        collapsed = [x for i, x in enumerate(queries) if i == 0 or queries[i - 1] != x]
        if len(collapsed) >= 2:
            chains.append(QueryChain(tuple(collapsed)))
    for journey in aggregate_journeys(chains).values():
        journey.validate()
        assert journey.transitional_query not in journey.converging_queries


def test_accumulator_merge_is_order_independent():
    rng = random.Random(9)
    vocab = ["a", "b", "c", "d", "e"]
    chains = [QueryChain(tuple(rng.sample(vocab, rng.randint(2, 5)))) for _ in range(100)]
    left, right = JourneyAccumulator(), JourneyAccumulator()
    for chain in chains[:40]:
        left.add(chain)
    for chain in chains[40:]:
        right.add(chain)
    merged_lr = JourneyAccumulator().merge(left).merge(right).result()
    merged_rl = JourneyAccumulator().merge(right).merge(left).result()
    assert merged_lr == merged_rl == aggregate_journeys(chains)


def test_prune_drops_low_support():
    journeys = {"t": JourneyContext("t", Counter({"a": 1}), Counter({"c": 1}), support=1)}
    assert prune_journeys(journeys, min_support=2) == {}


def test_prune_keeps_top_convergings_with_lexicographic_ties():
    convergings = Counter({f"c{i}": 10 - i for i in range(10)})
    convergings.update({"b-tie": 6})
    journeys = {"t": JourneyContext("t", Counter({"a": 1}), convergings, support=60)}
    pruned = prune_journeys(journeys, max_convergings=5)["t"]
    assert [c for c, _ in pruned.ranked_convergings()] == ["c0", "c1", "c2", "c3", "b-tie"]


@pytest.mark.parametrize("kwargs", [{"min_support": 0}, {"max_sources": 0}, {"max_convergings": 0}])
def test_prune_rejects_bad_limits(kwargs):
    with pytest.raises(InvalidConfig):
        prune_journeys({}, **kwargs)


def test_mined_suggestions_ranked(gold_journey):
    gold_journey.converging_queries["18k gold david yurman"] += 2
    assert mined_suggestions(gold_journey) == [("18k gold david yurman", 3), ("david yurman chain gold 18k", 1)]


def test_journey_file_round_trip(tmp_path, gold_journey):
    path = tmp_path / "journeys.jsonl"
    write_journeys(path, {gold_journey.transitional_query: gold_journey})
    assert read_journeys(path) == {gold_journey.transitional_query: gold_journey}
    line = path.read_text(encoding="utf-8").strip()
    assert line.startswith('{"t": "18k gold diamonds necklace"')


def test_chain_file_reports_corrupt_line(tmp_path):
    path = tmp_path / "chains.jsonl"
    write_chains(path, [QueryChain(("a", "b")), QueryChain(("c", "d"))])
    with open(path, "a", encoding="utf-8") as f:
        f.write('{"queries": 5}\n')
    with pytest.raises(CorruptSnapshot) as excinfo:
        read_chains(path)
    assert excinfo.value.line_number == 3


@pytest.mark.parametrize("field", ["sources", "convergings"])
def test_journey_file_rejects_count_lists(tmp_path, field):
    data = {"t": "t", "sources": {"s": 1}, "convergings": {"c": 1}, "support": 1}
    data[field] = ["a", "a"]
    path = tmp_path / "journeys.jsonl"
    path.write_text(json.dumps(data) + "\n", encoding="utf-8")
    with pytest.raises(CorruptSnapshot) as excinfo:
        read_journeys(path)
    assert excinfo.value.line_number == 1
