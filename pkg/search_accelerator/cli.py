"""
Command-line entry point.

    accelerator <subcommand> --config <path> [--seed n] [--mock-llm <fixture>] [--log-level LEVEL]

Batch stages read and write JSONL files named in the config's ``paths`` section:

    profiles     events                      -> profiles
    mine         events                      -> mined chains
    filter       mined chains, profiles      -> filtered chains, journeys
    alternate    journeys, profiles          -> alternates
    build-store  alternates, events          -> store snapshot
    eval         journeys, snapshot, profiles -> impressions, report, report text
    pipeline     all of the above in order
    serve        store snapshot              -> HTTP API (blocks)

Exit codes: 0 success, 1 configuration error, 2 stage failure.
"""
import argparse
import logging
import sys

from .config import PipelineConfig
from .errors import AcceleratorError, ConfigError, StageError, ZeroBaseline
from .eval_harness import (
    IntentDiversityClickModel,
    compute_metrics,
    relative_delta,
    report_json,
    report_table,
    suggestion_sets,
    synthesize_replay,
    write_impressions,
)
from .event_log import EventLogStats, load_sessions, read_events
from .intent_filter import filter_corpus
from .llm_alternator import PROMPT_VARIABLES, alternate_many, load_few_shots, mined_record, read_candidates, write_candidates
from .llm_client import create_client
from .prompt_template import PromptTemplate
from .query_repr import QuerySimilarity, build_profiles, read_profiles, write_profiles
from .sequence_miner import aggregate_journeys, mine_chains, prune_journeys, read_chains, read_journeys, write_chains, write_journeys
from .suggestion_store import SuggestionStore, build_records, serve
from .tracers import StageTracer

logger = logging.getLogger(__name__)

BATCH_STAGES = ("profiles", "mine", "filter", "alternate", "build-store", "eval")
SUBCOMMANDS = BATCH_STAGES + ("serve", "pipeline")

BASELINE_ARM = "Baseline"
MINED_ARM = "Intent filtered"
LLM_ARM = "LLM Alternator"


def _require_events(config):
    if not config.paths.events:
        raise ConfigError("paths.events must be set for this stage")
    return config.paths.events


def _similarity(config):
    return QuerySimilarity(read_profiles(config.paths.profiles), config.similarity)


def stage_profiles(config, span):
    sessions = load_sessions(_require_events(config))
    profiles = build_profiles(sessions)
    span.set_attribute("sessions", len(sessions))
    span.set_attribute("profiles", write_profiles(config.paths.profiles, profiles))


def stage_mine(config, span):
    stats = EventLogStats()
    sessions = load_sessions(_require_events(config), stats)
    chains = mine_chains(sessions)
    span.set_attribute("events_skipped", stats.skipped)
    span.set_attribute("chains", write_chains(config.paths.mined, chains))


def stage_filter(config, span):
    chains = read_chains(config.paths.mined)
    kept = filter_corpus(chains, _similarity(config), config.intent_filter)
    journeys = prune_journeys(
        aggregate_journeys(kept),
        min_support=config.prune.min_support,
        max_sources=config.prune.max_sources,
        max_convergings=config.prune.max_convergings,
    )
    span.set_attribute("chains_in", len(chains))
    span.set_attribute("chains_kept", write_chains(config.paths.chains, kept))
    span.set_attribute("journeys", write_journeys(config.paths.journeys, journeys))


def _load_template(path):
    template = PromptTemplate.from_file(path)
    variables = set(template.get_variables())
    if variables != set(PROMPT_VARIABLES):
        raise ConfigError(
            f"prompt template {path} must use exactly {{{{k}}}}, {{{{examples}}}} and {{{{journey}}}}; "
            f"found {', '.join(sorted(variables)) or 'none'}"
        )
    return template


def stage_alternate(config, span):
    cfg = config.alternator
    template = _load_template(cfg.template_path) if cfg.template_path else None
    journeys = read_journeys(config.paths.journeys)
    client = create_client(cfg)
    few_shots = load_few_shots(cfg.few_shots_path) if cfg.few_shots_path else ()
    records = alternate_many(
        journeys.values(),
        client,
        few_shots=few_shots,
        cfg=cfg,
        diversity=config.diversity,
        sim=_similarity(config),
        template=template,
    )
    span.set_attribute("journeys", len(journeys))
    span.set_attribute("records", write_candidates(config.paths.alternates, records))


def resolve_built_at(config):
    """Build time for store records: the configured value, else the newest event timestamp."""
    if config.built_at_ms is not None:
        return config.built_at_ms
    with open(_require_events(config), "rb") as f:
        return max((event.timestamp_ms for event in read_events(f)), default=0)


def stage_build_store(config, span):
    built_at_ms = resolve_built_at(config)
    store = SuggestionStore(build_records(read_candidates(config.paths.alternates), built_at_ms))
    span.set_attribute("built_at_ms", built_at_ms)
    span.set_attribute("records", store.snapshot(config.paths.snapshot))


def stage_eval(config, span):
    journeys = read_journeys(config.paths.journeys)
    store = SuggestionStore.load(config.paths.snapshot)
    sim = _similarity(config)
    mined = [mined_record(journey, config.diversity.k_out) for journey in journeys.values()]
    arms = {
        BASELINE_ARM: suggestion_sets(mined, limit=1),
        MINED_ARM: suggestion_sets(mined),
        LLM_ARM: suggestion_sets(store.records()),
    }
    # every arm is replayed over the same anchors
    anchors = set.intersection(*(set(a for a, shown in arm.items() if shown) for arm in arms.values()))
    arms = {name: {a: arm[a] for a in sorted(anchors)} for name, arm in arms.items()}

    e = config.eval
    click_model = IntentDiversityClickModel(
        sim=sim,
        base_click=e.base_click,
        base_convert=e.base_convert,
        position_decay=e.position_decay,
        relevance_weight=e.relevance_weight,
        novelty_weight=e.novelty_weight,
    )
    metrics = {}
    for name, suggestion_set in arms.items():
        events = synthesize_replay(suggestion_set, click_model, e.n_impressions, config.seed, max_shown=e.max_shown)
        metrics[name] = compute_metrics(events)
        if name == LLM_ARM:
            write_impressions(config.paths.impressions, events)
        logger.info(f"{name}: ctr={metrics[name].ctr:.4f} cvr={metrics[name].cvr:.4f}")

    deltas = {}
    for name, variant, baseline in (
        (MINED_ARM, MINED_ARM, BASELINE_ARM),
        (LLM_ARM, LLM_ARM, BASELINE_ARM),
        (f"{LLM_ARM} vs {MINED_ARM}", LLM_ARM, MINED_ARM),
    ):
        try:
            deltas[name] = relative_delta(metrics[variant], metrics[baseline])
        except ZeroBaseline as err:
            logger.warning(f"No relative change for {name}: {err}")
            deltas[name] = None

    with open(config.paths.report, "w", encoding="utf-8", newline="\n") as f:
        f.write(report_json(metrics, deltas))
    with open(config.paths.report_text, "w", encoding="utf-8", newline="\n") as f:
        f.write(report_table(metrics, deltas))
    span.set_attribute("anchors", len(anchors))
    span.set_attribute("impressions_per_arm", e.n_impressions)


def stage_serve(config, span):
    store = SuggestionStore.load(config.paths.snapshot)
    span.set_attribute("records", len(store))
    serve(store, config.serve.bind, config.paths.snapshot, config.serve.reload_interval_s)


STAGES = {
    "profiles": stage_profiles,
    "mine": stage_mine,
    "filter": stage_filter,
    "alternate": stage_alternate,
    "build-store": stage_build_store,
    "eval": stage_eval,
    "serve": stage_serve,
}


def run(subcommand, config: PipelineConfig, tracer: StageTracer = None):
    """
    Run one subcommand against a loaded config.

    Returns:
        int: 0 on success.

    Raises:
        ConfigError: If the subcommand is unknown or the config lacks a needed path.
        StageError: If a stage fails; the module error is kept as ``cause``.
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}; expected one of {', '.join(SUBCOMMANDS)}")
    tracer = tracer or StageTracer()
    stages = BATCH_STAGES if subcommand == "pipeline" else (subcommand,)
    for stage in stages:
        logger.info(f"Running stage {stage}")
        with tracer.stage(stage, seed=config.seed) as span:
            try:
                STAGES[stage](config, span)
            except ConfigError:
                raise
            except (AcceleratorError, OSError) as e:
                raise StageError(stage, e) from e
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="accelerator",
        description="Mine shopper search journeys, generate alternate queries and serve related searches.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="Pipeline config JSON (default: $ACCELERATOR_CONFIG)")
    parser.add_argument("--seed", type=int, help="Override the config's rng seed")
    parser.add_argument("--mock-llm", metavar="FIXTURE", help="Answer LLM prompts from a canned JSONL fixture")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level for standard error (default: INFO)",
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = PipelineConfig.load(args.config).with_overrides(seed=args.seed, mock_fixture=args.mock_llm)
        tracer = StageTracer(config.paths.trace, metadata={"subcommand": args.subcommand, "seed": config.seed})
        try:
            return run(args.subcommand, config, tracer)
        finally:
            tracer.shutdown()
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 1
    except StageError as e:
        logger.error(str(e))
        return 2


if __name__ == "__main__":
    sys.exit(main())
