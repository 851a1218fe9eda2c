"""Small shared helpers: token estimates, digests, canonical JSON."""

from __future__ import annotations

import hashlib
import json
import math


def estimate_tokens(text: str) -> int:
    """Approximate token count as ceil(len(text) / 4).

    A deliberate, documented stand-in for a real tokenizer: cheap, stable
    across environments, and good enough for chunking budgets and usage
    accounting in offline runs.
    """
    return math.ceil(len(text) / 4)


def prompt_digest(purpose: str, prompt: str) -> str:
    """Stable 16-hex-digit key for a (purpose, prompt) pair.

    Used to match replayed transcript entries and to label solve traces.
    The prompt is stripped so trailing-newline differences do not split
    otherwise identical prompts.
    """
    h = hashlib.sha256()
    h.update(purpose.encode("utf-8"))
    h.update(b"\x00")
    h.update(prompt.strip().encode("utf-8"))
    return h.hexdigest()[:16]


def short_hash(data: bytes | str, length: int = 12) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()[:length]


def canonical_json(value: object) -> str:
    """Serialize with sorted keys and a trailing newline.

    Equal values always produce byte-identical text, which is what the
    round-trip and determinism guarantees elsewhere lean on.
    """
    return json.dumps(value, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def compact_json(value: object) -> str:
    """One-line canonical form, used for digests and wire payloads."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
