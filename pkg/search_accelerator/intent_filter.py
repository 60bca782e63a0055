import logging
from dataclasses import dataclass, replace
from typing import Iterable, List

from .errors import InvalidConfig, NotConverted
from .query_repr import SimilarityFn
from .sequence_miner import QueryChain

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntentFilterConfig:
    threshold: float = 0.7

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidConfig(f"threshold must be in [0, 1], got {self.threshold}")


def filter_chain(chain: QueryChain, sim: SimilarityFn, cfg: IntentFilterConfig) -> QueryChain:
    """
    Keep the part of a chain that shares the converging query's intent.

    Walks backward from the converging query and cuts at the first adjacent pair
    whose similarity falls below the threshold. The converging query is always
    kept, so the result may have a single query.

    Args:
        chain (QueryChain): A converted chain.
        sim (SimilarityFn): Query similarity function.
        cfg (IntentFilterConfig): Filter configuration.

    Returns:
        QueryChain: The maximal suffix whose adjacent similarities all pass.

    Raises:
        NotConverted: If the chain did not end in a conversion.
    """
    if not chain.terminal_converted:
        raise NotConverted(f"Chain ending at {chain.queries[-1]!r} is not converted")

    queries = chain.queries
    start = len(queries) - 1
    while start > 0 and sim(queries[start - 1], queries[start]) >= cfg.threshold:
        start -= 1
    if start == 0:
        return chain
    return replace(chain, queries=queries[start:])


def filter_corpus(chains: Iterable[QueryChain], sim: SimilarityFn, cfg: IntentFilterConfig) -> List[QueryChain]:
    """Apply filter_chain to every chain and drop results shorter than two queries."""
    kept: List[QueryChain] = []
    total = 0
    for chain in chains:
        total += 1
        filtered = filter_chain(chain, sim, cfg)
        if len(filtered) >= 2:
            kept.append(filtered)
    logger.info(f"Intent filter kept {len(kept)} of {total} chains (threshold={cfg.threshold})")
    return kept
