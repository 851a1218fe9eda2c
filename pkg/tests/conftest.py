"""Shared fixtures: templates, scripted providers, sandboxes, toolboxes."""

from __future__ import annotations

import sys
import threading
from dataclasses import dataclass

import pytest

from bookforge.errors import MockMissError
from bookforge.fake_worker import _execute
from bookforge.forge import ForgeConfig, forge_toolbox
from bookforge.llm import LlmClient, LlmResponse, ProviderConfig, UsageLedger
from bookforge.sandbox import ExecResponse, SandboxPool
from bookforge.synthetic import forge_transcript, miniature_book
from bookforge.templates import TemplateSet
from bookforge.util import canonical_json, estimate_tokens


@dataclass
class _ScriptedConfig:
    kind: str = "scripted"
    model_name: str = "scripted"


class ScriptedLlm:
    """Deterministic stand-in provider for unit tests.

    Answers from a prompt->reply mapping when given one, otherwise from a
    reply queue in call order. Implements the same surface the pipeline
    uses on the real client (complete, ledger, config).
    """

    def __init__(self, replies: list[str] | None = None,
                 by_prompt: dict[str, str] | None = None,
                 reply_fn=None):
        self.replies = list(replies or [])
        self.by_prompt = dict(by_prompt or {})
        self.reply_fn = reply_fn
        self.requests = []
        self.ledger = UsageLedger()
        self.config = _ScriptedConfig()
        self._lock = threading.Lock()

    def complete(self, request):
        request.validate()
        with self._lock:
            self.requests.append(request)
            if request.prompt in self.by_prompt:
                text = self.by_prompt[request.prompt]
            elif self.reply_fn is not None:
                text = self.reply_fn(request)
            elif self.replies:
                text = self.replies.pop(0)
            else:
                raise MockMissError(
                    f"scripted provider has no reply for purpose={request.purpose}"
                )
        response = LlmResponse(
            text=text,
            prompt_tokens=estimate_tokens(request.prompt),
            completion_tokens=estimate_tokens(text),
            latency_ms=0.0,
            provider_id="scripted",
        )
        self.ledger.record(request.purpose, response)
        return response


class InProcessSandbox:
    """Protocol-faithful sandbox that skips the subprocess entirely.

    Runs requests through the fake worker's execution routine in this
    process; unit tests get real ExecResponse objects without process
    startup cost.
    """

    def run(self, request) -> ExecResponse:
        return ExecResponse.from_wire(_execute(request.to_wire()))


@pytest.fixture(scope="session")
def templates() -> TemplateSet:
    return TemplateSet.load()


@pytest.fixture(scope="session")
def fake_worker_argv() -> list[str]:
    return [sys.executable, "-m", "bookforge.fake_worker"]


@pytest.fixture()
def fake_pool(fake_worker_argv):
    with SandboxPool(fake_worker_argv) as pool:
        yield pool


@pytest.fixture()
def inproc_sandbox() -> InProcessSandbox:
    return InProcessSandbox()


@pytest.fixture(scope="session")
def forge_fixture(tmp_path_factory, templates):
    """The miniature book, its transcript file, and config, built once."""
    book = miniature_book()
    config = ForgeConfig()
    path = tmp_path_factory.mktemp("transcripts") / "forge.json"
    path.write_text(canonical_json(forge_transcript(book, config, templates)))
    return book, config, path


@pytest.fixture(scope="session")
def forged_toolbox(forge_fixture, templates, fake_worker_argv):
    """The six-tool toolbox forged from the miniature book."""
    book, config, transcript_path = forge_fixture
    client = LlmClient(ProviderConfig(kind="mock", transcript_path=str(transcript_path)))
    with SandboxPool(fake_worker_argv) as pool:
        toolbox, report = forge_toolbox(
            book,
            config,
            client,
            pool,
            templates,
            creator_model="fixture",
            created_at="2026-01-01T00:00:00Z",
        )
    return toolbox, report


def make_mock_client(tmp_path, entries, name="transcript.json") -> LlmClient:
    path = tmp_path / name
    path.write_text(canonical_json(entries))
    return LlmClient(ProviderConfig(kind="mock", transcript_path=str(path)))
