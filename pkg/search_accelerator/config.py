"""
Pipeline configuration: one JSON document mapped onto a tree of frozen dataclasses.

    {
      "paths": {"events": "data/events.jsonl", "out_dir": "out"},
      "similarity": {"min_profile_items": 3, "blend_alpha": 0.7},
      "intent_filter": {"threshold": 0.7},
      "prune": {"min_support": 1},
      "alternator": {"endpoint": "http://localhost:8000/v1/completions", "k": 7},
      "diversity": {"mmr_lambda": 0.5, "max_pairwise_sim": 0.8, "k_out": 5},
      "serve": {"bind": "127.0.0.1:8080"},
      "eval": {"n_impressions": 10000},
      "seed": 7
    }

Every section is optional; stages that read the event log need ``paths.events``.
"""
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Union, get_args, get_origin

from .errors import ConfigError, InvalidConfig
from .intent_filter import IntentFilterConfig
from .llm_alternator import AlternatorConfig, DiversityConfig
from .query_repr import SimilarityConfig

logger = logging.getLogger(__name__)

CONFIG_ENV = "ACCELERATOR_CONFIG"


@dataclass(frozen=True)
class PathsConfig:
    events: Optional[str] = None
    out_dir: str = "out"
    profiles: Optional[str] = None
    mined: Optional[str] = None
    chains: Optional[str] = None
    journeys: Optional[str] = None
    alternates: Optional[str] = None
    snapshot: Optional[str] = None
    impressions: Optional[str] = None
    report: Optional[str] = None
    report_text: Optional[str] = None
    trace: Optional[str] = None

    STAGE_FILES = {
        "profiles": "profiles.jsonl",
        "mined": "mined.jsonl",
        "chains": "chains.jsonl",
        "journeys": "journeys.jsonl",
        "alternates": "alternates.jsonl",
        "snapshot": "store.jsonl",
        "impressions": "impressions.jsonl",
        "report": "report.json",
        "report_text": "report.txt",
    }

    def resolved(self, base_dir):
        """Make every path absolute against base_dir and fill stage files under out_dir."""
        out_dir = _resolve(base_dir, self.out_dir)
        values = {"out_dir": out_dir, "events": _resolve(base_dir, self.events), "trace": _resolve(base_dir, self.trace)}
        for name, default in self.STAGE_FILES.items():
            value = getattr(self, name)
            values[name] = _resolve(base_dir, value) if value else os.path.join(out_dir, default)
        return dataclasses.replace(self, **values)


@dataclass(frozen=True)
class PruneConfig:
    min_support: int = 1
    max_sources: int = 10
    max_convergings: int = 10

    def __post_init__(self):
        if self.min_support < 1:
            raise InvalidConfig(f"min_support must be >= 1, got {self.min_support}")
        if self.max_sources < 1 or self.max_convergings < 1:
            raise InvalidConfig("max_sources and max_convergings must be >= 1")


@dataclass(frozen=True)
class ServeConfig:
    bind: str = "127.0.0.1:8080"
    reload_interval_s: float = 0.0

    def __post_init__(self):
        host, sep, port = self.bind.rpartition(":")
        if not sep or not port.isdigit() or not 0 < int(port) < 65536:
            raise InvalidConfig(f"bind must look like host:port, got {self.bind!r}")
        if self.reload_interval_s < 0:
            raise InvalidConfig(f"reload_interval_s must be >= 0, got {self.reload_interval_s}")


@dataclass(frozen=True)
class EvalConfig:
    n_impressions: int = 10000
    base_click: float = 0.6
    base_convert: float = 0.4
    position_decay: float = 0.8
    relevance_weight: float = 0.5
    novelty_weight: float = 0.5
    max_shown: Optional[int] = None

    def __post_init__(self):
        if self.n_impressions < 0:
            raise InvalidConfig(f"n_impressions must be >= 0, got {self.n_impressions}")
        for name in ("base_click", "base_convert", "position_decay", "relevance_weight", "novelty_weight"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1], got {value}")
        if self.max_shown is not None and self.max_shown < 1:
            raise InvalidConfig(f"max_shown must be >= 1, got {self.max_shown}")


SECTIONS = {
    "paths": PathsConfig,
    "similarity": SimilarityConfig,
    "intent_filter": IntentFilterConfig,
    "prune": PruneConfig,
    "alternator": AlternatorConfig,
    "diversity": DiversityConfig,
    "serve": ServeConfig,
    "eval": EvalConfig,
}

ALTERNATOR_PATHS = ("fixture_path", "few_shots_path", "template_path")


def _resolve(base_dir, path):
    if path is None or path == "-" or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def _matches(value, annotation):
    if get_origin(annotation) is Union:
        return any(_matches(value, arg) for arg in get_args(annotation))
    if annotation is type(None):
        return value is None
    if annotation is bool:
        return isinstance(value, bool)
    if annotation is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if annotation is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(annotation, type):
        return isinstance(value, annotation)
    return True


def _type_name(annotation):
    if get_origin(annotation) is Union:
        return " or ".join(_type_name(arg) for arg in get_args(annotation))
    return "null" if annotation is type(None) else getattr(annotation, "__name__", str(annotation))


def _build_section(name, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {', '.join(unknown)}")
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    wrong = sorted(key for key, value in data.items() if not _matches(value, types[key]))
    if wrong:
        raise ConfigError(
            f"invalid '{name}' config: wrong type for " + ", ".join(f"{key} (expected {_type_name(types[key])}, got {data[key]!r})" for key in wrong)
        )
    try:
        return cls(**data)
    except (InvalidConfig, TypeError, AttributeError) as e:
        raise ConfigError(f"invalid '{name}' config: {e}") from e


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    intent_filter: IntentFilterConfig = field(default_factory=IntentFilterConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    alternator: AlternatorConfig = field(default_factory=AlternatorConfig)
    diversity: DiversityConfig = field(default_factory=DiversityConfig)
    serve: ServeConfig = field(default_factory=ServeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    built_at_ms: Optional[int] = None

    @classmethod
    def from_dict(cls, data, base_dir="."):
        """
        Build a config from a parsed JSON document.

        Args:
            data (dict): The document.
            base_dir (str): Directory that relative paths are resolved against.

        Returns:
            PipelineConfig: Validated config with absolute paths.

        Raises:
            ConfigError: On unknown keys, wrong types or out-of-range values.
        """
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = sorted(set(data) - set(SECTIONS) - {"seed", "built_at_ms"})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

        sections = {name: _build_section(name, section_cls, data.get(name, {})) for name, section_cls in SECTIONS.items()}
        sections["paths"] = sections["paths"].resolved(base_dir)
        alternator = sections["alternator"]
        sections["alternator"] = dataclasses.replace(
            alternator, **{name: _resolve(base_dir, getattr(alternator, name)) for name in ALTERNATOR_PATHS}
        )

        seed = data.get("seed", 0)
        built_at_ms = data.get("built_at_ms")
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        if built_at_ms is not None and (isinstance(built_at_ms, bool) or not isinstance(built_at_ms, int) or built_at_ms < 0):
            raise ConfigError(f"built_at_ms must be a non-negative integer, got {built_at_ms!r}")
        return cls(seed=seed, built_at_ms=built_at_ms, **sections)

    @classmethod
    def load(cls, path=None):
        """
        Read a config file, falling back to the ACCELERATOR_CONFIG environment variable.

        Raises:
            ConfigError: If no path is given, the file is missing or it is not valid JSON.
        """
        path = path or os.getenv(CONFIG_ENV)
        if not path:
            raise ConfigError(f"no config file given (use --config or set {CONFIG_ENV})")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except (OSError, ValueError) as e:
            raise ConfigError(f"could not read config file {path}: {e}")
        config = cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))
        logger.debug(f"Loaded config from {path}")
        return config

    def with_overrides(self, seed=None, mock_fixture=None):
        """Apply command-line overrides for the seed and the mock LLM fixture."""
        config = self
        if seed is not None:
            if seed < 0:
                raise ConfigError(f"seed must be >= 0, got {seed}")
            config = dataclasses.replace(config, seed=seed)
        if mock_fixture is not None:
            alternator = dataclasses.replace(config.alternator, mock=True, fixture_path=os.path.abspath(mock_fixture))
            config = dataclasses.replace(config, alternator=alternator)
        return config
