import json
import os

import pytest

from search_accelerator.config import PipelineConfig
from search_accelerator.errors import ConfigError


def write(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def test_defaults():
    config = PipelineConfig.from_dict({})
    assert config.seed == 0
    assert config.intent_filter.threshold == 0.7
    assert config.diversity.k_out == 5
    assert config.alternator.k == 7
    assert config.serve.bind == "127.0.0.1:8080"
    assert config.eval.n_impressions == 10000


def test_relative_paths_resolve_against_config_directory(tmp_path):
    config = PipelineConfig.load(write(tmp_path, {"paths": {"events": "data/events.jsonl", "snapshot": "/srv/store.jsonl"}}))
    assert config.paths.events == os.path.join(str(tmp_path), "data", "events.jsonl")
    assert config.paths.snapshot == "/srv/store.jsonl"
    assert config.paths.journeys == os.path.join(str(tmp_path), "out", "journeys.jsonl")
    assert config.paths.trace is None


def test_alternator_paths_resolve(tmp_path):
    config = PipelineConfig.load(write(tmp_path, {"alternator": {"mock": True, "fixture_path": "mock.jsonl"}}))
    assert config.alternator.fixture_path == os.path.join(str(tmp_path), "mock.jsonl")


@pytest.mark.parametrize(
    "data",
    [
        {"colour": "blue"},
        {"paths": {"event": "x.jsonl"}},
        {"intent_filter": {"threshold": 1.5}},
        {"diversity": {"k_out": 0}},
        {"alternator": {"mock": True}},
        {"serve": {"bind": "localhost"}},
        {"eval": {"base_click": -0.1}},
        {"prune": {"min_support": 0}},
        {"seed": -1},
        {"seed": True},
        {"built_at_ms": "yesterday"},
        {"paths": "out"},
        {"serve": {"bind": 8080}},
        {"alternator": {"mock": "yes", "fixture_path": "mock.jsonl"}},
        {"paths": {"events": 5}},
        {"diversity": {"k_out": "5"}},
        {"diversity": {"k_out": 5.0}},
        {"similarity": {"min_profile_items": True}},
        [],
    ],
)
def test_invalid_documents(data):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict(data)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        PipelineConfig.load(str(tmp_path / "absent.json"))


def test_invalid_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{seed: 1", encoding="utf-8")
    with pytest.raises(ConfigError):
        PipelineConfig.load(str(path))


def test_environment_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("ACCELERATOR_CONFIG", write(tmp_path, {"seed": 11}))
    assert PipelineConfig.load().seed == 11


def test_no_path_and_no_environment(monkeypatch):
    monkeypatch.delenv("ACCELERATOR_CONFIG", raising=False)
    with pytest.raises(ConfigError):
        PipelineConfig.load()


def test_overrides(tmp_path):
    config = PipelineConfig.load(write(tmp_path, {"seed": 3}))
    overridden = config.with_overrides(seed=9, mock_fixture=str(tmp_path / "mock.jsonl"))
    assert overridden.seed == 9
    assert overridden.alternator.mock
    assert overridden.alternator.fixture_path == str(tmp_path / "mock.jsonl")
    assert config.with_overrides() == config
    with pytest.raises(ConfigError):
        config.with_overrides(seed=-2)


def test_wrong_type_names_the_field():
    with pytest.raises(ConfigError, match="bind"):
        PipelineConfig.from_dict({"serve": {"bind": 8080}})


def test_int_accepted_for_float_fields():
    config = PipelineConfig.from_dict({"intent_filter": {"threshold": 1}, "serve": {"reload_interval_s": 2}})
    assert config.intent_filter.threshold == 1
    assert config.serve.reload_interval_s == 2
