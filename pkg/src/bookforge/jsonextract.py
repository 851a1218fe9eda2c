"""Pull JSON values out of chatty model replies.

Models wrap their JSON in prose, code fences, or both. The strategy here:
try fenced blocks first, then the raw text; within each candidate, walk
the opening brackets left to right and take the first position where a
complete JSON value parses. Callers check the shape (list vs object) and
raise their own domain error with the raw text attached.
"""

from __future__ import annotations

import json
import re

_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def _candidates(text: str) -> list[str]:
    found = [m.group(1) for m in _FENCE.finditer(text)]
    found.append(text)
    return found


def _first_value(text: str, openers: str) -> object:
    decoder = json.JSONDecoder()
    for candidate in _candidates(text):
        for pos, ch in enumerate(candidate):
            if ch not in openers:
                continue
            try:
                value, _ = decoder.raw_decode(candidate, pos)
            except ValueError:
                continue
            return value
    raise ValueError(f"no JSON value opening with one of {openers!r} found")


def extract_json_list(text: str) -> list:
    """First parseable JSON array in the text. Raises ValueError if none."""
    value = _first_value(text, "[")
    if not isinstance(value, list):
        raise ValueError(f"expected a JSON list, got {type(value).__name__}")
    return value


def extract_json_value(text: str) -> object:
    """First parseable JSON array or object, whichever appears first.

    Used where the shape itself is informative: a caller expecting an
    object can tell a well-formed-but-list reply apart from garbage.
    """
    return _first_value(text, "[{")
