import json
import sys
import threading
import types

import pytest
import requests

from search_accelerator.errors import (
    InvalidConfig,
    LLMTimeout,
    NonRetryableStatus,
    TransportError,
    UnparseableResponse,
)
from search_accelerator.llm_alternator import AlternatorConfig, AlternatorRequest, build_prompt
from search_accelerator.llm_client import (
    HttpLLMClient,
    LiteLLMClient,
    MockLLMClient,
    create_client,
    extract_path,
    transitional_from_prompt,
)
from search_accelerator.utils import get_unique_key


class FakeResponse:
    def __init__(self, status_code, body=None, text=None):
        self.status_code = status_code
        self._body = body
        self.text = text if text is not None else json.dumps(body)
        self.reason = "fake"

    def json(self):
        if self._body is None:
            raise ValueError("no body")
        return self._body


class FakeSession:
    """Replays a scripted list of responses or exceptions, recording every call."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def post(self, url, headers=None, data=None, timeout=None):
        self.calls.append({"url": url, "headers": headers, "payload": json.loads(data), "timeout": timeout})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def ok(text):
    return FakeResponse(200, {"choices": [{"text": text}]})


def make_client(outcomes, **kwargs):
    session = FakeSession(outcomes)
    options = dict(max_retries=2, backoff_initial_s=0, backoff_max_s=0, session=session, api_key="secret")
    options.update(kwargs)
    return HttpLLMClient("http://llm.local/v1/completions", "solar-10.7b-instruct", **options), session


def test_complete_posts_wire_payload():
    client, session = make_client([ok("hello")], temperature=0.2, max_tokens=64, timeout_s=5)
    assert client.complete("prompt text") == "hello"
    call = session.calls[0]
    assert call["url"] == "http://llm.local/v1/completions"
    assert call["payload"] == {"model": "solar-10.7b-instruct", "prompt": "prompt text", "max_tokens": 64, "temperature": 0.2}
    assert call["timeout"] == 5
    assert call["headers"]["Authorization"] == "Bearer secret"


def test_retries_transient_status_then_succeeds():
    client, session = make_client([FakeResponse(503, {}), FakeResponse(429, {}), ok("done")])
    assert client.complete("p") == "done"
    assert len(session.calls) == 3


def test_connection_errors_exhaust_retries():
    errors = [requests.exceptions.ConnectionError("refused") for _ in range(3)]
    client, session = make_client(errors)
    with pytest.raises(TransportError):
        client.complete("p")
    assert len(session.calls) == 3


def test_timeout_is_not_retried():
    client, session = make_client([requests.exceptions.ReadTimeout("slow")])
    with pytest.raises(LLMTimeout):
        client.complete("p")
    assert len(session.calls) == 1


def test_non_retryable_status():
    client, session = make_client([FakeResponse(401, text="denied")])
    with pytest.raises(NonRetryableStatus) as excinfo:
        client.complete("p")
    assert excinfo.value.status_code == 401
    assert len(session.calls) == 1


def test_non_json_body():
    client, _ = make_client([FakeResponse(200, None, text="<html>")])
    with pytest.raises(UnparseableResponse):
        client.complete("p")


def test_custom_completion_path():
    body = {"choices": [{"message": {"content": "chat text"}}]}
    client, _ = make_client([FakeResponse(200, body)], completion_path="choices.0.message.content")
    assert client.complete("p") == "chat text"


def test_extract_path_errors():
    with pytest.raises(UnparseableResponse):
        extract_path({"choices": []}, "choices.0.text")
    with pytest.raises(UnparseableResponse):
        extract_path({"choices": [{"text": 3}]}, "choices.0.text")


def test_api_key_from_environment(monkeypatch):
    monkeypatch.setenv("ACCELERATOR_LLM_API_KEY", "from-env")
    client = HttpLLMClient("http://llm.local", "m", session=FakeSession([]))
    assert client._headers()["Authorization"] == "Bearer from-env"


def test_http_client_requires_endpoint():
    with pytest.raises(InvalidConfig):
        HttpLLMClient(None, "m")


def test_transitional_from_prompt(gold_journey):
    prompt = build_prompt(AlternatorRequest(gold_journey))
    assert transitional_from_prompt(prompt) == "18k gold diamonds necklace"
    assert transitional_from_prompt("no blocks") is None


def test_mock_fixture_lookup_order(tmp_path, gold_journey):
    prompt = build_prompt(AlternatorRequest(gold_journey))
    path = tmp_path / "mock.jsonl"
    rows = [
        {"transitional_query": "18k gold diamonds necklace", "response": "by transitional"},
        {"prompt_key": get_unique_key(prompt), "response": {"by": "key"}},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    client = MockLLMClient.from_fixture(path)
    assert json.loads(client.complete(prompt)) == {"by": "key"}
    assert client.complete("unknown") == ""
    assert client.calls == [prompt, "unknown"]


def test_mock_fixture_without_key(tmp_path):
    path = tmp_path / "mock.jsonl"
    path.write_text('{"response": "x"}\n', encoding="utf-8")
    with pytest.raises(InvalidConfig):
        MockLLMClient.from_fixture(path)


def test_create_client_prefers_mock(fixtures_dir):
    cfg = AlternatorConfig(endpoint="http://llm.local")
    client = create_client(cfg, mock_fixture=f"{fixtures_dir}/mock_llm.jsonl")
    assert isinstance(client, MockLLMClient)
    assert isinstance(create_client(cfg), HttpLLMClient)


class OrderedSession:
    """Answers by prompt, failing the first 'slow' attempt, and records the order of posts."""

    def __init__(self):
        self.order = []
        self.first_failed = threading.Event()
        self._lock = threading.Lock()

    def post(self, url, headers=None, data=None, timeout=None):
        prompt = json.loads(data)["prompt"]
        with self._lock:
            self.order.append(prompt)
            attempt = self.order.count(prompt)
        if prompt == "slow" and attempt == 1:
            self.first_failed.set()
            return FakeResponse(503, {})
        return ok(prompt)


def test_backoff_does_not_hold_a_concurrency_slot():
    session = OrderedSession()
    client = HttpLLMClient(
        "http://llm.local/v1/completions", "m", max_retries=1, backoff_initial_s=0.5, backoff_max_s=0.5,
        max_concurrency=1, session=session,
    )
    results = {}
    slow = threading.Thread(target=lambda: results.setdefault("slow", client.complete("slow")))
    slow.start()
    assert session.first_failed.wait(5)
    results["fast"] = client.complete("fast")
    slow.join(5)
    assert results == {"slow": "slow", "fast": "fast"}
    assert session.order == ["slow", "fast", "slow"]


def fake_litellm(content="alternates", error=None):
    module = types.ModuleType("litellm")

    class Timeout(Exception):
        pass

    class APIConnectionError(Exception):
        pass

    module.Timeout = Timeout
    module.APIConnectionError = APIConnectionError
    module.calls = []

    def completion(**params):
        module.calls.append(params)
        if error is not None:
            raise error(module)
        message = types.SimpleNamespace(content=content)
        return types.SimpleNamespace(choices=[types.SimpleNamespace(message=message)])

    module.completion = completion
    return module


def test_litellm_client_returns_message_content(monkeypatch):
    module = fake_litellm("18k white gold diamond necklace")
    monkeypatch.setitem(sys.modules, "litellm", module)
    client = LiteLLMClient("openai/gpt-4o-mini", max_tokens=64, timeout_s=5, max_retries=2, api_base="http://llm.local", api_key="secret")
    assert client.complete("prompt text") == "18k white gold diamond necklace"
    params = module.calls[0]
    assert params["model"] == "openai/gpt-4o-mini"
    assert params["messages"] == [{"role": "user", "content": "prompt text"}]
    assert params["num_retries"] == 2
    assert params["timeout"] == 5
    assert params["api_base"] == "http://llm.local"
    assert params["api_key"] == "secret"


def test_litellm_client_omits_unset_endpoint(monkeypatch):
    module = fake_litellm()
    monkeypatch.setitem(sys.modules, "litellm", module)
    monkeypatch.delenv("ACCELERATOR_LLM_API_KEY", raising=False)
    LiteLLMClient("openai/gpt-4o-mini").complete("p")
    assert "api_base" not in module.calls[0]
    assert "api_key" not in module.calls[0]


class StatusError(Exception):
    status_code = 400


@pytest.mark.parametrize(
    "error, expected",
    [
        (lambda m: m.Timeout("slow"), LLMTimeout),
        (lambda m: m.APIConnectionError("refused"), TransportError),
        (lambda m: StatusError("bad request"), NonRetryableStatus),
    ],
)
def test_litellm_client_maps_errors(monkeypatch, error, expected):
    monkeypatch.setitem(sys.modules, "litellm", fake_litellm(error=error))
    with pytest.raises(expected):
        LiteLLMClient("openai/gpt-4o-mini").complete("p")


def test_litellm_client_status_is_kept(monkeypatch):
    monkeypatch.setitem(sys.modules, "litellm", fake_litellm(error=lambda m: StatusError("bad request")))
    with pytest.raises(NonRetryableStatus) as excinfo:
        LiteLLMClient("openai/gpt-4o-mini").complete("p")
    assert excinfo.value.status_code == 400


def test_litellm_client_without_text(monkeypatch):
    monkeypatch.setitem(sys.modules, "litellm", fake_litellm(content=None))
    with pytest.raises(UnparseableResponse):
        LiteLLMClient("openai/gpt-4o-mini").complete("p")


def test_create_client_litellm_backend(monkeypatch):
    monkeypatch.setitem(sys.modules, "litellm", fake_litellm())
    client = create_client(AlternatorConfig(backend="litellm", model="openai/x", max_concurrency=2))
    assert isinstance(client, LiteLLMClient)
    assert client.model == "openai/x"
    assert client.max_concurrency == 2
