"""Model access: one client, two providers (HTTP and replayed transcript).

Every call is tagged with a purpose so usage can be accounted per pipeline
phase and output caps applied per purpose. The mock provider replays a
recorded transcript and is what every offline test runs against; it answers
by prompt digest first, then by per-purpose call ordinal.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field

import requests

from .errors import ConfigError, MockMissError, TransportError
from .util import estimate_tokens, prompt_digest

PURPOSES = ("organization", "generation", "refinement", "selection", "solution")

# Output caps per purpose. Selection replies are a short rationale plus an
# index list; everything else may carry whole functions.
DEFAULT_MAX_OUTPUT_TOKENS = {
    "organization": 2048,
    "generation": 2048,
    "refinement": 2048,
    "selection": 512,
    "solution": 2048,
}


@dataclass(frozen=True)
class LlmRequest:
    prompt: str
    purpose: str
    max_output_tokens: int | None = None  # None means the purpose default
    temperature: float = 0.0

    def validate(self) -> None:
        if self.purpose not in PURPOSES:
            raise ConfigError(f"unknown purpose tag: {self.purpose!r}")
        if self.max_output_tokens is not None and self.max_output_tokens <= 0:
            raise ConfigError("max_output_tokens must be positive")
        if not self.prompt:
            raise ConfigError("prompt is empty")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: float
    provider_id: str


@dataclass(frozen=True)
class ProviderConfig:
    kind: str  # "http" or "mock"
    model_name: str = ""
    endpoint: str = ""
    api_key_env: str = ""
    transcript_path: str = ""
    max_retries: int = 3
    backoff_base_ms: int = 250
    request_timeout_s: float = 120.0

    def validate(self) -> None:
        if self.kind == "http":
            if not self.endpoint:
                raise ConfigError("http provider needs an endpoint")
            if not self.model_name:
                raise ConfigError("http provider needs a model name")
            if not self.api_key_env:
                raise ConfigError("http provider needs api_key_env naming the key variable")
        elif self.kind == "mock":
            if not self.transcript_path:
                raise ConfigError("mock provider needs a transcript path")
        else:
            raise ConfigError(f"unknown provider kind: {self.kind!r}")
        if self.max_retries < 0 or self.backoff_base_ms < 0:
            raise ConfigError("retry settings must be non-negative")


def backoff_delays_ms(base_ms: int, retries: int) -> list[int]:
    """Exponential backoff schedule: base, 2x, 4x, ... one entry per retry."""
    return [base_ms * (2 ** attempt) for attempt in range(retries)]


class UsageLedger:
    """Thread-safe per-purpose counters for calls, tokens, time, retries."""

    _FIELDS = ("calls", "prompt_tokens", "completion_tokens", "wall_ms", "retries")

    def __init__(self):
        self._lock = threading.Lock()
        self._by_purpose: dict[str, dict[str, float]] = {}

    def record(self, purpose: str, response: LlmResponse, retries: int = 0) -> None:
        with self._lock:
            row = self._by_purpose.setdefault(
                purpose, {name: 0 for name in self._FIELDS}
            )
            row["calls"] += 1
            row["prompt_tokens"] += response.prompt_tokens
            row["completion_tokens"] += response.completion_tokens
            row["wall_ms"] += response.latency_ms
            row["retries"] += retries

    def snapshot(self) -> dict:
        with self._lock:
            by_purpose = {p: dict(row) for p, row in self._by_purpose.items()}
        total = {name: 0 for name in self._FIELDS}
        for row in by_purpose.values():
            for name in self._FIELDS:
                total[name] += row[name]
        return {"by_purpose": by_purpose, "total": total}

    @staticmethod
    def diff(after: dict, before: dict) -> dict:
        """Usage accumulated between two snapshots of the same ledger."""
        fields = UsageLedger._FIELDS
        purposes = set(after["by_purpose"]) | set(before["by_purpose"])
        by_purpose = {}
        for p in sorted(purposes):
            a = after["by_purpose"].get(p, {})
            b = before["by_purpose"].get(p, {})
            row = {name: a.get(name, 0) - b.get(name, 0) for name in fields}
            if any(row.values()):
                by_purpose[p] = row
        total = {
            name: after["total"][name] - before["total"][name] for name in fields
        }
        return {"by_purpose": by_purpose, "total": total}


class _MockTranscript:
    """Recorded replies, keyed by prompt digest or per-purpose ordinal.

    File format: a JSON list of entries
    ``{"purpose": ..., "match": {"digest": ...} | {"ordinal": N}, "response": ...}``.
    Digest entries win over ordinal entries. Ordinals count all requests of
    that purpose, in order, starting at zero.
    """

    def __init__(self, entries: list[dict]):
        self._by_digest: dict[tuple[str, str], str] = {}
        self._by_ordinal: dict[tuple[str, int], str] = {}
        self._counters: dict[str, int] = {}
        self._lock = threading.Lock()
        for i, entry in enumerate(entries):
            try:
                purpose = entry["purpose"]
                match = entry["match"]
                response = entry["response"]
            except (TypeError, KeyError) as exc:
                raise ConfigError(f"transcript entry {i} is malformed: {exc}") from exc
            if "digest" in match:
                self._by_digest[(purpose, match["digest"])] = response
            elif "ordinal" in match:
                self._by_ordinal[(purpose, int(match["ordinal"]))] = response
            else:
                raise ConfigError(f"transcript entry {i} has no digest or ordinal match")

    @classmethod
    def load(cls, path: str) -> "_MockTranscript":
        try:
            with open(path, encoding="utf-8") as handle:
                entries = json.load(handle)
        except FileNotFoundError as exc:
            raise ConfigError(f"transcript not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"transcript is not valid JSON: {path}: {exc}") from exc
        if not isinstance(entries, list):
            raise ConfigError(f"transcript must be a JSON list: {path}")
        return cls(entries)

    def lookup(self, purpose: str, prompt: str) -> str:
        digest = prompt_digest(purpose, prompt)
        with self._lock:
            ordinal = self._counters.get(purpose, 0)
            self._counters[purpose] = ordinal + 1
            hit = self._by_digest.get((purpose, digest))
            if hit is None:
                hit = self._by_ordinal.get((purpose, ordinal))
        if hit is None:
            raise MockMissError(
                f"no transcript entry for purpose={purpose} digest={digest} "
                f"ordinal={ordinal}; prompt starts: {prompt[:200]!r}"
            )
        return hit


class LlmClient:
    """Single entry point for completions, any provider."""

    def __init__(self, config: ProviderConfig, ledger: UsageLedger | None = None):
        config.validate()
        self.config = config
        self.ledger = ledger if ledger is not None else UsageLedger()
        self._transcript = (
            _MockTranscript.load(config.transcript_path) if config.kind == "mock" else None
        )

    def complete(self, request: LlmRequest) -> LlmResponse:
        request.validate()
        cap = request.max_output_tokens or DEFAULT_MAX_OUTPUT_TOKENS[request.purpose]
        if self.config.kind == "mock":
            response, retries = self._complete_mock(request), 0
        else:
            response, retries = self._complete_http(request, cap)
        self.ledger.record(request.purpose, response, retries)
        return response

    def usage_report(self, price_table: dict | None = None) -> dict:
        report = self.ledger.snapshot()
        if price_table is not None:
            total = report["total"]
            report["cost_usd"] = (
                total["prompt_tokens"] * price_table["prompt"]
                + total["completion_tokens"] * price_table["completion"]
            )
        return report

    def _complete_mock(self, request: LlmRequest) -> LlmResponse:
        text = self._transcript.lookup(request.purpose, request.prompt)
        return LlmResponse(
            text=text,
            prompt_tokens=estimate_tokens(request.prompt),
            completion_tokens=estimate_tokens(text),
            latency_ms=0.0,
            provider_id="mock",
        )

    def _complete_http(self, request: LlmRequest, cap: int) -> tuple[LlmResponse, int]:
        api_key = os.environ.get(self.config.api_key_env, "")
        if not api_key:
            raise ConfigError(
                f"environment variable {self.config.api_key_env} is not set"
            )
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": cap,
        }
        headers = {"Authorization": f"Bearer {api_key}"}
        delays = backoff_delays_ms(self.config.backoff_base_ms, self.config.max_retries)
        retries = 0
        last_reason = "no attempt made"
        for attempt in range(self.config.max_retries + 1):
            start = time.monotonic()
            try:
                http = requests.post(
                    self.config.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.config.request_timeout_s,
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_reason = f"transport failure: {exc}"
            else:
                if http.status_code == 429 or http.status_code >= 500:
                    last_reason = f"HTTP {http.status_code}"
                elif http.status_code >= 400:
                    raise TransportError(
                        f"provider rejected the request: HTTP {http.status_code}: "
                        f"{http.text[:200]}"
                    )
                else:
                    elapsed_ms = (time.monotonic() - start) * 1000.0
                    return self._parse_http_response(http, request, elapsed_ms), retries
            if attempt < self.config.max_retries:
                time.sleep(delays[attempt] / 1000.0)
                retries += 1
        raise TransportError(
            f"provider unreachable after {self.config.max_retries + 1} attempts "
            f"({last_reason})"
        )

    def _parse_http_response(
        self, http: "requests.Response", request: LlmRequest, elapsed_ms: float
    ) -> LlmResponse:
        try:
            body = http.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected provider response shape: {exc}") from exc
        usage = body.get("usage") or {}
        return LlmResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", estimate_tokens(request.prompt))),
            completion_tokens=int(usage.get("completion_tokens", estimate_tokens(text))),
            latency_ms=elapsed_ms,
            provider_id=self.config.model_name,
        )
