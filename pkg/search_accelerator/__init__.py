from .config import PipelineConfig
from .eval_harness import compute_metrics, relative_delta, synthesize_replay
from .event_log import load_sessions, normalize_query
from .intent_filter import filter_chain, filter_corpus
from .llm_alternator import alternate_journey, alternate_many
from .llm_client import HttpLLMClient, LiteLLMClient, MockLLMClient
from .prompt_template import PromptTemplate
from .query_repr import QuerySimilarity, build_profiles
from .sequence_miner import aggregate_journeys, mine_chains
from .suggestion_store import SuggestionRecord, SuggestionStore, create_app
from .tracers import StageTracer
from .utils import response_checker


__all__ = [
    "PipelineConfig",
    "SuggestionStore",
    "SuggestionRecord",
    "StageTracer",
    "PromptTemplate",
    "QuerySimilarity",
    "HttpLLMClient",
    "LiteLLMClient",
    "MockLLMClient",
    "alternate_journey",
    "alternate_many",
    "aggregate_journeys",
    "build_profiles",
    "compute_metrics",
    "create_app",
    "filter_chain",
    "filter_corpus",
    "load_sessions",
    "mine_chains",
    "normalize_query",
    "relative_delta",
    "synthesize_replay",
]
