"""
Completion clients for the alternate-query generator.

Every client exposes ``complete(prompt) -> str``. HttpLLMClient speaks the plain
JSON wire protocol::

    POST <endpoint>
    {"model": "...", "prompt": "...", "max_tokens": n, "temperature": t}

and reads the completion text from a configurable path in the response body
(for example ``choices.0.text``).
"""
import json
import logging
import os
import threading
from typing import Optional, Protocol

import requests
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from .errors import InvalidConfig, LLMTimeout, NonRetryableStatus, TransportError, UnparseableResponse
from .utils import get_unique_key, iter_jsonl, response_checker

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 425, 429, 500, 502, 503, 504}


class LLMClient(Protocol):
    def complete(self, prompt: str) -> str:
        ...


class _Transient(Exception):
    """Internal marker for failures worth another attempt."""


def extract_path(body, path):
    """
    Walk a dotted path such as ``choices.0.text`` through nested JSON.

    Raises:
        UnparseableResponse: If the path does not resolve to a string.
    """
    node = body
    for part in path.split("."):
        try:
            node = node[int(part)] if isinstance(node, list) else node[part]
        except (KeyError, IndexError, ValueError, TypeError):
            raise UnparseableResponse(f"Completion path '{path}' not found in response body")
    if not isinstance(node, str):
        raise UnparseableResponse(f"Completion path '{path}' is not a string")
    return node


class HttpLLMClient:
    def __init__(
        self,
        endpoint,
        model,
        max_tokens=512,
        temperature=0.0,
        timeout_s=30.0,
        max_retries=3,
        backoff_initial_s=0.5,
        backoff_max_s=8.0,
        completion_path="choices.0.text",
        max_concurrency=4,
        api_key=None,
        session=None,
    ):
        """
        Initializes the HTTP completion client.

        Args:
            endpoint (str): URL receiving the completion POST.
            model (str): Model name sent with every request.
            max_tokens (int): Completion length cap.
            temperature (float): Sampling temperature.
            timeout_s (float): Per-request deadline in seconds.
            max_retries (int): Retries after the first attempt for transient failures.
            backoff_initial_s (float): First backoff delay; doubles each retry.
            backoff_max_s (float): Backoff ceiling.
            completion_path (str): Dotted path to the completion text in the response body.
            max_concurrency (int): Maximum in-flight requests across threads.
            api_key (str, optional): Bearer token. Defaults to ACCELERATOR_LLM_API_KEY.
            session (requests.Session, optional): Session to send requests with.
        """
        if not endpoint:
            raise InvalidConfig("LLM endpoint must be set")
        if max_retries < 0 or max_concurrency < 1 or timeout_s <= 0:
            raise InvalidConfig("max_retries >= 0, max_concurrency >= 1 and timeout_s > 0 are required")
        self.endpoint = endpoint
        self.model = model
        self.max_tokens = max_tokens
        self.temperature = temperature
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_initial_s = backoff_initial_s
        self.backoff_max_s = backoff_max_s
        self.completion_path = completion_path
        self.max_concurrency = max_concurrency
        self.api_key = api_key or os.getenv("ACCELERATOR_LLM_API_KEY")
        self.session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max_concurrency)

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post_once(self, payload):
        try:
            with self._slots:
                response = self.session.post(
                    self.endpoint,
                    headers=self._headers(),
                    data=json.dumps(payload),
                    timeout=self.timeout_s,
                )
        except requests.exceptions.Timeout as e:
            raise LLMTimeout(f"LLM request exceeded {self.timeout_s}s deadline") from e
        except requests.exceptions.RequestException as e:
            logger.warning(f"LLM transport failure: {e}")
            raise _Transient(str(e)) from e

        status = response_checker(response, "HttpLLMClient.complete")
        if status in RETRYABLE_STATUS:
            logger.warning(f"LLM endpoint returned retryable status {status}")
            raise _Transient(f"status {status}")
        if status != 200:
            raise NonRetryableStatus(status, response.text)
        try:
            body = response.json()
        except ValueError as e:
            raise UnparseableResponse(f"LLM response body is not JSON: {e}")
        return extract_path(body, self.completion_path)

    def complete(self, prompt):
        """
        Send one prompt and return the raw completion text.

        Raises:
            LLMTimeout: If the request exceeds the deadline.
            TransportError: If transient failures persist past the retry cap.
            NonRetryableStatus: On a non-retryable HTTP status.
        """
        payload = {
            "model": self.model,
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }
        retrying = Retrying(
            stop=stop_after_attempt(self.max_retries + 1),
            wait=wait_exponential(multiplier=self.backoff_initial_s, max=self.backoff_max_s),
            retry=retry_if_exception_type(_Transient),
            reraise=True,
        )
        try:
            return retrying(self._post_once, payload)
        except _Transient as e:
            raise TransportError(
                f"LLM endpoint unavailable after {self.max_retries + 1} attempts: {e}"
            ) from e


class LiteLLMClient:
    """Provider-routed completion through litellm (OpenAI, Hugging Face, vLLM, ...)."""

    def __init__(self, model, max_tokens=512, temperature=0.0, timeout_s=30.0, max_retries=3,
                 api_base=None, api_key=None, max_concurrency=4):
        import litellm

        self._litellm = litellm
        self.model = model
        self.max_tokens = max_tokens
        self.temperature = temperature
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.api_base = api_base
        self.api_key = api_key or os.getenv("ACCELERATOR_LLM_API_KEY")
        self.max_concurrency = max_concurrency
        self._slots = threading.BoundedSemaphore(max_concurrency)

    def complete(self, prompt):
        completion_params = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "timeout": self.timeout_s,
            "num_retries": self.max_retries,
        }
        if self.api_base:
            completion_params["api_base"] = self.api_base
        if self.api_key:
            completion_params["api_key"] = self.api_key

        with self._slots:
            try:
                response = self._litellm.completion(**completion_params)
            except self._litellm.Timeout as e:
                raise LLMTimeout(str(e)) from e
            except self._litellm.APIConnectionError as e:
                raise TransportError(str(e)) from e
            except Exception as e:
                raise NonRetryableStatus(getattr(e, "status_code", 0), str(e)) from e

        content = response.choices[0].message.content
        if not isinstance(content, str):
            raise UnparseableResponse("litellm returned no text content")
        return content


def transitional_from_prompt(prompt):
    """Recover the transitional query from the last ``Input:`` block of a prompt."""
    start = prompt.rfind("Input:\n")
    end = prompt.rfind("\nOutput:")
    if start == -1 or end <= start:
        return None
    try:
        return json.loads(prompt[start + len("Input:\n"):end]).get("transitional query")
    except (ValueError, AttributeError):
        return None


class MockLLMClient:
    """
    Deterministic client answering from canned JSONL fixtures.

    Each fixture line holds a ``response`` (string, or JSON that is serialized)
    and one key: ``prompt`` (exact text), ``prompt_key`` (get_unique_key of the
    prompt) or ``transitional_query``. Lookup tries them in that order.
    """

    def __init__(self, responses_by_prompt=None, responses_by_transitional=None, default_response=""):
        self.by_key = {get_unique_key(p): r for p, r in (responses_by_prompt or {}).items()}
        self.by_transitional = dict(responses_by_transitional or {})
        self.default_response = default_response
        self.max_concurrency = 1
        self.calls = []

    @classmethod
    def from_fixture(cls, path):
        client = cls()
        for line_number, text in iter_jsonl(path):
            try:
                row = json.loads(text)
                response = row["response"]
            except (ValueError, KeyError, TypeError) as e:
                raise InvalidConfig(f"Mock LLM fixture {path} line {line_number} is invalid: {e}")
            if not isinstance(response, str):
                response = json.dumps(response, ensure_ascii=False)
            if "prompt" in row:
                client.by_key[get_unique_key(row["prompt"])] = response
            elif "prompt_key" in row:
                client.by_key[row["prompt_key"]] = response
            elif "transitional_query" in row:
                client.by_transitional[row["transitional_query"]] = response
            else:
                raise InvalidConfig(f"Mock LLM fixture {path} line {line_number} has no lookup key")
        logger.info(f"Loaded {len(client.by_key) + len(client.by_transitional)} canned responses from {path}")
        return client

    def complete(self, prompt):
        self.calls.append(prompt)
        key = get_unique_key(prompt)
        if key in self.by_key:
            return self.by_key[key]
        transitional = transitional_from_prompt(prompt)
        if transitional is not None and transitional in self.by_transitional:
            return self.by_transitional[transitional]
        logger.debug(f"No canned response for transitional query {transitional!r}")
        return self.default_response


def create_client(alternator_config, mock_fixture: Optional[str] = None):
    """Build the client named by an AlternatorConfig; a mock fixture wins over everything."""
    fixture = mock_fixture or (alternator_config.fixture_path if alternator_config.mock else None)
    if fixture:
        return MockLLMClient.from_fixture(fixture)
    if alternator_config.backend == "litellm":
        return LiteLLMClient(
            model=alternator_config.model,
            max_tokens=alternator_config.max_tokens,
            temperature=alternator_config.temperature,
            timeout_s=alternator_config.timeout_s,
            max_retries=alternator_config.max_retries,
            api_base=alternator_config.endpoint,
            max_concurrency=alternator_config.max_concurrency,
        )
    return HttpLLMClient(
        endpoint=alternator_config.endpoint,
        model=alternator_config.model,
        max_tokens=alternator_config.max_tokens,
        temperature=alternator_config.temperature,
        timeout_s=alternator_config.timeout_s,
        max_retries=alternator_config.max_retries,
        backoff_initial_s=alternator_config.backoff_initial_s,
        backoff_max_s=alternator_config.backoff_max_s,
        completion_path=alternator_config.completion_path,
        max_concurrency=alternator_config.max_concurrency,
    )
