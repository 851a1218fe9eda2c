"""Provider client: mock replay, usage accounting, retry behavior."""

import json

import pytest
import requests
from hypothesis import given
from hypothesis import strategies as st

from bookforge.errors import ConfigError, MockMissError, TransportError
from bookforge.llm import (
    DEFAULT_MAX_OUTPUT_TOKENS,
    LlmClient,
    LlmRequest,
    LlmResponse,
    ProviderConfig,
    UsageLedger,
    backoff_delays_ms,
)
from bookforge.util import estimate_tokens, prompt_digest
from tests.conftest import make_mock_client


def test_purpose_tags_and_caps_are_wired():
    assert set(DEFAULT_MAX_OUTPUT_TOKENS) == {
        "organization",
        "generation",
        "refinement",
        "selection",
        "solution",
    }
    assert DEFAULT_MAX_OUTPUT_TOKENS["selection"] == 512
    assert all(
        DEFAULT_MAX_OUTPUT_TOKENS[p] == 2048
        for p in ("organization", "generation", "refinement", "solution")
    )


def test_request_validation():
    with pytest.raises(ConfigError, match="purpose"):
        LlmRequest(prompt="p", purpose="nonsense").validate()
    with pytest.raises(ConfigError, match="max_output_tokens"):
        LlmRequest(prompt="p", purpose="solution", max_output_tokens=0).validate()


def test_mock_replay_by_digest(tmp_path):
    prompt = "What is 2 + 2?"
    client = make_mock_client(
        tmp_path,
        [
            {
                "purpose": "solution",
                "match": {"digest": prompt_digest("solution", prompt)},
                "response": "4",
            }
        ],
    )
    response = client.complete(LlmRequest(prompt=prompt, purpose="solution"))
    assert response.text == "4"
    assert response.latency_ms == 0.0
    assert response.prompt_tokens == estimate_tokens(prompt)
    assert response.completion_tokens == estimate_tokens("4")


def test_mock_replay_by_ordinal_counts_per_purpose(tmp_path):
    client = make_mock_client(
        tmp_path,
        [
            {"purpose": "solution", "match": {"ordinal": 0}, "response": "first"},
            {"purpose": "solution", "match": {"ordinal": 1}, "response": "second"},
            {"purpose": "selection", "match": {"ordinal": 0}, "response": "[0]"},
        ],
    )
    assert client.complete(LlmRequest(prompt="a", purpose="solution")).text == "first"
    assert client.complete(LlmRequest(prompt="x", purpose="selection")).text == "[0]"
    assert client.complete(LlmRequest(prompt="b", purpose="solution")).text == "second"


def test_mock_digest_wins_over_ordinal(tmp_path):
    prompt = "keyed prompt"
    client = make_mock_client(
        tmp_path,
        [
            {"purpose": "solution", "match": {"ordinal": 0}, "response": "by ordinal"},
            {
                "purpose": "solution",
                "match": {"digest": prompt_digest("solution", prompt)},
                "response": "by digest",
            },
        ],
    )
    assert client.complete(LlmRequest(prompt=prompt, purpose="solution")).text == "by digest"
    # the keyed call still consumed ordinal 0
    with pytest.raises(MockMissError):
        client.complete(LlmRequest(prompt="other", purpose="solution"))


def test_mock_miss_names_purpose_digest_and_prompt(tmp_path):
    client = make_mock_client(tmp_path, [])
    prompt = "never recorded " + "x" * 300
    with pytest.raises(MockMissError) as excinfo:
        client.complete(LlmRequest(prompt=prompt, purpose="generation"))
    message = str(excinfo.value)
    assert "purpose=generation" in message
    assert prompt_digest("generation", prompt) in message
    assert prompt[:200] in message


def test_mock_transcript_file_errors(tmp_path):
    missing = ProviderConfig(kind="mock", transcript_path=str(tmp_path / "nope.json"))
    with pytest.raises(ConfigError, match="not found"):
        LlmClient(missing)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        LlmClient(ProviderConfig(kind="mock", transcript_path=str(bad)))


def test_provider_config_validation():
    with pytest.raises(ConfigError):
        ProviderConfig(kind="http").validate()
    with pytest.raises(ConfigError):
        ProviderConfig(kind="warp-drive").validate()
    ProviderConfig(kind="mock", transcript_path="t.json").validate()


def test_ledger_totals_and_cost(tmp_path):
    ledger = UsageLedger()
    ledger.record(
        "generation",
        LlmResponse(text="", prompt_tokens=10, completion_tokens=20, latency_ms=5.0, provider_id="m"),
    )
    ledger.record(
        "selection",
        LlmResponse(text="", prompt_tokens=20, completion_tokens=40, latency_ms=5.0, provider_id="m"),
        retries=1,
    )
    snap = ledger.snapshot()
    assert snap["total"]["calls"] == 2
    assert snap["total"]["prompt_tokens"] == 30
    assert snap["total"]["completion_tokens"] == 60
    assert snap["total"]["retries"] == 1
    client = make_mock_client(tmp_path, [])
    client.ledger.record(
        "generation",
        LlmResponse(text="", prompt_tokens=30, completion_tokens=60, latency_ms=0.0, provider_id="m"),
    )
    report = client.usage_report(price_table={"prompt": 1e-6, "completion": 2e-6})
    assert report["cost_usd"] == pytest.approx(30e-6 + 120e-6)


def test_ledger_diff_windows_usage():
    ledger = UsageLedger()
    before = ledger.snapshot()
    ledger.record(
        "solution",
        LlmResponse(text="", prompt_tokens=7, completion_tokens=3, latency_ms=1.0, provider_id="m"),
    )
    window = UsageLedger.diff(ledger.snapshot(), before)
    assert window["total"]["calls"] == 1
    assert window["by_purpose"]["solution"]["prompt_tokens"] == 7


@given(st.integers(min_value=1, max_value=10_000), st.integers(min_value=1, max_value=8))
def test_backoff_schedule_doubles_and_grows(base_ms, retries):
    delays = backoff_delays_ms(base_ms, retries)
    assert len(delays) == retries
    assert delays[0] == base_ms
    for earlier, later in zip(delays, delays[1:]):
        assert later == earlier * 2


class _FakeHttpResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no body")
        return self._payload


def _http_client(max_retries=3):
    return LlmClient(
        ProviderConfig(
            kind="http",
            model_name="test-model",
            endpoint="https://example.invalid/v1/chat/completions",
            api_key_env="TEST_LLM_KEY",
            max_retries=max_retries,
            backoff_base_ms=10,
        )
    )


def _ok_payload(text="hello"):
    return {
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": 5, "completion_tokens": 7},
    }


def test_http_retries_transient_then_succeeds(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "secret")
    sleeps = []
    monkeypatch.setattr("bookforge.llm.time.sleep", sleeps.append)
    attempts = iter(
        [
            requests.ConnectionError("reset"),
            _FakeHttpResponse(429),
            _FakeHttpResponse(503),
            _FakeHttpResponse(200, _ok_payload("recovered")),
        ]
    )

    def fake_post(url, json=None, headers=None, timeout=None):
        step = next(attempts)
        if isinstance(step, Exception):
            raise step
        return step

    monkeypatch.setattr("bookforge.llm.requests.post", fake_post)
    client = _http_client()
    response = client.complete(LlmRequest(prompt="p", purpose="solution"))
    assert response.text == "recovered"
    assert response.prompt_tokens == 5
    assert sleeps == [0.01, 0.02, 0.04]
    assert client.ledger.snapshot()["total"]["retries"] == 3


def test_http_gives_up_after_budget(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "secret")
    monkeypatch.setattr("bookforge.llm.time.sleep", lambda _ : None)
    monkeypatch.setattr(
        "bookforge.llm.requests.post",
        lambda *a, **k: _FakeHttpResponse(500),
    )
    with pytest.raises(TransportError, match="HTTP 500"):
        _http_client(max_retries=2).complete(LlmRequest(prompt="p", purpose="solution"))


def test_http_client_error_is_not_retried(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "secret")
    calls = []

    def fake_post(*args, **kwargs):
        calls.append(1)
        return _FakeHttpResponse(400, text="bad request")

    monkeypatch.setattr("bookforge.llm.requests.post", fake_post)
    with pytest.raises(TransportError, match="HTTP 400"):
        _http_client().complete(LlmRequest(prompt="p", purpose="solution"))
    assert len(calls) == 1


def test_http_missing_key_is_config_error(monkeypatch):
    monkeypatch.delenv("TEST_LLM_KEY", raising=False)
    with pytest.raises(ConfigError, match="TEST_LLM_KEY"):
        _http_client().complete(LlmRequest(prompt="p", purpose="solution"))


def test_http_sends_cap_and_temperature(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "secret")
    seen = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen.update(json)
        seen["auth"] = headers["Authorization"]
        return _FakeHttpResponse(200, _ok_payload())

    monkeypatch.setattr("bookforge.llm.requests.post", fake_post)
    _http_client().complete(LlmRequest(prompt="p", purpose="selection"))
    assert seen["max_tokens"] == 512
    assert seen["temperature"] == 0.0
    assert seen["auth"] == "Bearer secret"
    assert seen["messages"] == [{"role": "user", "content": "p"}]
