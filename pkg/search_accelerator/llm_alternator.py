"""
LLM alternate-query generation for transitional queries.

alternate_journey runs build_prompt -> complete -> parse_response ->
enforce_constraints -> mmr_rerank -> diversity_gate and falls back to the mined
converging queries when the model output is unusable.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from tqdm import tqdm

from .errors import (
    AllFiltered,
    CorruptSnapshot,
    EmptyAfterNormalization,
    EmptyJourney,
    InvalidConfig,
    LLMTimeout,
    NonRetryableStatus,
    SchemaViolation,
    TransportError,
    UnparseableResponse,
)
from .event_log import normalize_query
from .prompt_template import PromptTemplate
from .query_repr import SimilarityFn, sim_tokens
from .sequence_miner import JourneyContext, mined_suggestions
from .suggestion_store import Alternate, Provenance, SuggestionRecord
from .utils import iter_jsonl, write_jsonl

logger = logging.getLogger(__name__)

TRANSITIONAL_KEY = "transitional query"
ALTERNATES_KEY = "alternate queries"
PROMPT_VARIABLES = ("k", "examples", "journey")


@dataclass(frozen=True)
class DiversityConfig:
    mmr_lambda: float = 0.5
    max_pairwise_sim: float = 0.8
    k_out: int = 5

    def __post_init__(self):
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise InvalidConfig(f"mmr_lambda must be in [0, 1], got {self.mmr_lambda}")
        if not 0.0 <= self.max_pairwise_sim <= 1.0:
            raise InvalidConfig(f"max_pairwise_sim must be in [0, 1], got {self.max_pairwise_sim}")
        if self.k_out < 1:
            raise InvalidConfig(f"k_out must be >= 1, got {self.k_out}")


@dataclass(frozen=True)
class AlternatorConfig:
    backend: str = "http"
    endpoint: Optional[str] = None
    model: str = "solar-10.7b-instruct"
    k: int = 7
    max_tokens: int = 512
    temperature: float = 0.0
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_initial_s: float = 0.5
    backoff_max_s: float = 8.0
    completion_path: str = "choices.0.text"
    max_concurrency: int = 4
    mock: bool = False
    fixture_path: Optional[str] = None
    few_shots_path: Optional[str] = None
    template_path: Optional[str] = None
    strict_json: bool = False

    def __post_init__(self):
        if self.backend not in ("http", "litellm"):
            raise InvalidConfig(f"backend must be 'http' or 'litellm', got {self.backend!r}")
        if self.k < 1:
            raise InvalidConfig(f"k must be >= 1, got {self.k}")
        if self.max_retries < 0 or self.max_concurrency < 1 or self.timeout_s <= 0 or self.max_tokens < 1:
            raise InvalidConfig("max_retries >= 0, max_concurrency >= 1, max_tokens >= 1 and timeout_s > 0 are required")
        if not 0.0 <= self.temperature <= 2.0:
            raise InvalidConfig(f"temperature must be in [0, 2], got {self.temperature}")
        if self.backoff_initial_s < 0 or self.backoff_max_s < 0:
            raise InvalidConfig("backoff delays must be >= 0")
        if self.mock and not self.fixture_path:
            raise InvalidConfig("mock LLM requires fixture_path")


@dataclass(frozen=True)
class AlternatorRequest:
    journey: JourneyContext
    k: int = 7

    def __post_init__(self):
        if self.k < 1:
            raise InvalidConfig(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class AlternatorResponse:
    transitional_query: str
    alternates: Tuple[str, ...]

    def to_dict(self):
        return {TRANSITIONAL_KEY: self.transitional_query, ALTERNATES_KEY: list(self.alternates)}


@dataclass(frozen=True)
class FewShotExample:
    journey: JourneyContext
    response: AlternatorResponse = field(compare=False)


def journey_payload(journey: JourneyContext):
    return {
        "source queries": [q for q, _ in journey.ranked_sources()],
        TRANSITIONAL_KEY: journey.transitional_query,
        "converging queries": [q for q, _ in journey.ranked_convergings()],
    }


def load_few_shots(path) -> List[FewShotExample]:
    """Read exemplars from JSONL lines ``{"journey": {...}, "response": {...}}``."""
    examples = []
    for line_number, text in iter_jsonl(path):
        try:
            row = json.loads(text)
            journey = JourneyContext.from_dict(row["journey"])
            response = row["response"]
            examples.append(
                FewShotExample(
                    journey,
                    AlternatorResponse(response[TRANSITIONAL_KEY], tuple(response[ALTERNATES_KEY])),
                )
            )
        except (ValueError, KeyError, TypeError) as e:
            raise InvalidConfig(f"Few-shot file {path} line {line_number} is invalid: {e}")
    return examples


def build_prompt(req: AlternatorRequest, few_shots: Sequence[FewShotExample] = (), template: Optional[PromptTemplate] = None) -> str:
    """
    Render the alternator prompt for one journey.

    The output depends only on its inputs: identical requests give identical bytes.

    Raises:
        EmptyJourney: If the journey has no converging query.
    """
    journey = req.journey
    if not journey.converging_queries:
        raise EmptyJourney(f"Journey {journey.transitional_query!r} has no converging queries")

    template = template or PromptTemplate.default()
    blocks = []
    for example in few_shots:
        blocks.append(
            "Input:\n"
            + json.dumps(journey_payload(example.journey), ensure_ascii=False)
            + "\nOutput:\n"
            + json.dumps(example.response.to_dict(), ensure_ascii=False)
            + "\n"
        )
    examples = "Examples:\n" + "\n".join(blocks) if blocks else ""
    return template.compile(
        k=str(req.k),
        examples=examples,
        journey=json.dumps(journey_payload(journey), ensure_ascii=False),
    )


def complete(prompt, client) -> str:
    return client.complete(prompt)


def _strip_fence(text):
    stripped = text.strip()
    if stripped.startswith("```"):
        first_newline = stripped.find("\n")
        stripped = stripped[first_newline + 1:] if first_newline != -1 else ""
        if stripped.rstrip().endswith("```"):
            stripped = stripped.rstrip()[:-3]
    return stripped.strip()


def _is_payload(value):
    if isinstance(value, dict):
        return True
    return isinstance(value, list) and bool(value) and all(isinstance(v, dict) for v in value)


def _find_payload(raw):
    decoder = json.JSONDecoder()
    for index, ch in enumerate(raw):
        if ch not in "{[":
            continue
        try:
            value, _ = decoder.raw_decode(raw, index)
        except ValueError:
            continue
        if _is_payload(value):
            return value
    # bare key/value listing without the enclosing braces
    body = _strip_fence(raw).rstrip(",")
    if body.startswith('"'):
        try:
            value = json.loads("{" + body + "}")
        except ValueError:
            return None
        return value
    return None


def parse_response(raw, strict=False, expected_transitional=None) -> AlternatorResponse:
    """
    Extract the alternate queries from a model completion.

    In lenient mode the first well-formed JSON object (or array of objects) is used,
    wherever it sits in the text. In strict mode the completion, minus one code
    fence, must be exactly that JSON.

    Raises:
        UnparseableResponse: If no JSON payload can be found.
        SchemaViolation: If the payload lacks the expected keys or types.
    """
    if not isinstance(raw, str):
        raise UnparseableResponse("Completion is not text")
    if strict:
        try:
            payload = json.loads(_strip_fence(raw))
        except ValueError as e:
            raise UnparseableResponse(f"Completion is not JSON: {e}")
        if not _is_payload(payload):
            raise UnparseableResponse("Completion is not a JSON object or array of objects")
    else:
        payload = _find_payload(raw)
        if payload is None:
            raise UnparseableResponse("No JSON object found in completion")

    if isinstance(payload, list):
        chosen = payload[0]
        if expected_transitional is not None:
            for candidate in payload:
                transitional = candidate.get(TRANSITIONAL_KEY)
                if isinstance(transitional, str) and _safe_normalize(transitional) == expected_transitional:
                    chosen = candidate
                    break
        payload = chosen

    transitional = payload.get(TRANSITIONAL_KEY)
    alternates = payload.get(ALTERNATES_KEY)
    if not isinstance(transitional, str):
        raise SchemaViolation(f"'{TRANSITIONAL_KEY}' must be a string")
    if not isinstance(alternates, list) or not all(isinstance(a, str) for a in alternates):
        raise SchemaViolation(f"'{ALTERNATES_KEY}' must be an array of strings")

    normalized = []
    for alternate in alternates:
        query = _safe_normalize(alternate)
        if query is not None and query not in normalized:
            normalized.append(query)
    if not normalized:
        raise SchemaViolation("No usable alternate queries in completion")
    return AlternatorResponse(_safe_normalize(transitional) or transitional, tuple(normalized))


def _safe_normalize(text):
    try:
        return normalize_query(text)
    except EmptyAfterNormalization:
        return None


def enforce_constraints(resp: AlternatorResponse, journey: JourneyContext) -> List[str]:
    """
    Drop alternates that repeat the transitional query or a mined converging query.

    Duplicates are removed keeping the first occurrence; order is otherwise kept.

    Raises:
        AllFiltered: If no alternate survives.
    """
    forbidden = {_safe_normalize(journey.transitional_query)}
    forbidden.update(_safe_normalize(q) for q in journey.converging_queries)
    kept: List[str] = []
    for alternate in resp.alternates:
        query = _safe_normalize(alternate)
        if query is None or query in forbidden or query in kept:
            continue
        kept.append(query)
    if not kept:
        raise AllFiltered(f"Every alternate for {journey.transitional_query!r} repeats a mined query")
    return kept


def mmr_rerank(candidates: Sequence[str], anchor: str, sim: SimilarityFn, cfg: DiversityConfig) -> List[str]:
    """
    Greedy maximal-marginal-relevance selection of up to cfg.k_out candidates.

    Each step picks the candidate maximizing
    ``lambda * sim(c, anchor) - (1 - lambda) * max(sim(c, s) for s in selected)``;
    the first pick maximizes sim(c, anchor). Ties go to the earlier candidate.
    """
    relevance = [sim(c, anchor) for c in candidates]
    remaining = list(range(len(candidates)))
    selected: List[int] = []
    while remaining and len(selected) < cfg.k_out:
        best_index, best_score = None, None
        for index in remaining:
            if selected:
                redundancy = max(sim(candidates[index], candidates[s]) for s in selected)
                score = cfg.mmr_lambda * relevance[index] - (1.0 - cfg.mmr_lambda) * redundancy
            else:
                score = relevance[index]
            if best_score is None or score > best_score:
                best_index, best_score = index, score
        selected.append(best_index)
        remaining.remove(best_index)
    return [candidates[i] for i in selected]


def diversity_gate(alternates: Sequence[str], sim: SimilarityFn, cfg: DiversityConfig) -> List[str]:
    """Drop every alternate more similar than cfg.max_pairwise_sim to an earlier kept one."""
    kept: List[str] = []
    for alternate in alternates:
        if all(sim(alternate, previous) <= cfg.max_pairwise_sim for previous in kept):
            kept.append(alternate)
    return kept


def _rank_scores(queries, provenance):
    n = len(queries)
    return tuple(Alternate(q, round(1.0 - rank / n, 6), provenance) for rank, q in enumerate(queries))


def mined_record(journey: JourneyContext, k_out: int) -> SuggestionRecord:
    """Fallback record: mined converging queries scored by count relative to the top one."""
    ranked = [(q, c) for q, c in mined_suggestions(journey) if q != journey.transitional_query][:k_out]
    if not ranked:
        raise EmptyJourney(f"Journey {journey.transitional_query!r} has no converging queries")
    top = ranked[0][1]
    alternates = tuple(Alternate(q, round(c / top, 6), Provenance.MINED) for q, c in ranked)
    return SuggestionRecord(journey.transitional_query, alternates, built_at_ms=0, support=journey.support)


def alternate_journey(
    journey: JourneyContext,
    client,
    few_shots: Sequence[FewShotExample] = (),
    cfg: Optional[AlternatorConfig] = None,
    diversity: Optional[DiversityConfig] = None,
    sim: Optional[SimilarityFn] = None,
    template: Optional[PromptTemplate] = None,
) -> SuggestionRecord:
    """
    Produce the suggestion candidates for one journey.

    Args:
        journey (JourneyContext): Pruned, intent-filtered journey.
        client: Object with ``complete(prompt) -> str``.
        few_shots: In-context exemplars.
        cfg (AlternatorConfig): Request size and parsing mode.
        diversity (DiversityConfig): MMR and pairwise-similarity settings.
        sim (SimilarityFn): Similarity used for reranking; token Jaccard by default.
        template (PromptTemplate): Overrides the built-in instruction template.

    Returns:
        SuggestionRecord: LLM alternates, or mined converging queries on fallback.
            built_at_ms is left at 0 for the store builder to stamp.

    Raises:
        EmptyJourney: If the journey has no converging query.
        LLMTimeout, TransportError, NonRetryableStatus: Only when no fallback exists.
    """
    cfg = cfg or AlternatorConfig()
    diversity = diversity or DiversityConfig()
    sim = sim or sim_tokens
    anchor = journey.transitional_query

    prompt = build_prompt(AlternatorRequest(journey, cfg.k), few_shots, template)
    try:
        raw = complete(prompt, client)
        response = parse_response(raw, strict=cfg.strict_json, expected_transitional=anchor)
        candidates = enforce_constraints(response, journey)
    except (UnparseableResponse, SchemaViolation, AllFiltered) as e:
        logger.info(f"Falling back to mined queries for {anchor!r}: {e}")
        return mined_record(journey, diversity.k_out)
    except (LLMTimeout, TransportError, NonRetryableStatus) as e:
        logger.warning(f"LLM call failed for {anchor!r}, using mined queries: {e}")
        return mined_record(journey, diversity.k_out)

    ranked = mmr_rerank(candidates, anchor, sim, diversity)
    final = diversity_gate(ranked, sim, diversity)
    return SuggestionRecord(anchor, _rank_scores(final, Provenance.LLM), built_at_ms=0, support=journey.support)


def alternate_many(journeys, client, few_shots=(), cfg=None, diversity=None, sim=None, template=None, progress=True):
    """Run alternate_journey over many journeys; results keep the input order."""
    journeys = list(journeys)
    workers = max(1, getattr(client, "max_concurrency", 1))

    def run(journey):
        return alternate_journey(journey, client, few_shots, cfg, diversity, sim, template)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(
            tqdm(executor.map(run, journeys), total=len(journeys), desc="Generating alternates", disable=not progress)
        )
    llm_count = sum(1 for r in results if r.alternates[0].provenance is Provenance.LLM)
    logger.info(f"Alternates for {len(results)} journeys: {llm_count} from the LLM, {len(results) - llm_count} mined fallbacks")
    return results


def write_candidates(path, records):
    """Write candidate records as ``{"anchor", "alternates", "support"}`` lines sorted by anchor."""
    rows = []
    for record in sorted(records, key=lambda r: r.anchor_query):
        row = record.to_dict()
        del row["built_at"]
        rows.append(row)
    return write_jsonl(path, rows)


def read_candidates(path) -> List[SuggestionRecord]:
    records = []
    for line_number, text in iter_jsonl(path):
        try:
            data = json.loads(text)
            records.append(SuggestionRecord.from_dict({**data, "built_at": 0}))
        except (ValueError, TypeError) as e:
            raise CorruptSnapshot(line_number, str(e))
    return records
