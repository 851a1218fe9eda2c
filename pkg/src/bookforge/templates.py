"""Prompt templates: loading from disk and strict single-pass rendering.

Placeholders look like ``{question}``: a pair of braces around a bare
identifier. Everything else, including JSON braces and doubled braces that
appear verbatim in some templates, passes through untouched. Rendering is a
single pass, so substituted values are never re-scanned for placeholders.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import TemplateError
from .util import short_hash

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")

# Every prompt the pipeline can issue. A template directory must provide
# all of these as <name>.txt files.
TEMPLATE_NAMES = (
    "category_generation",
    "segment_assignment",
    "tool_generation",
    "tool_refinement",
    "category_selection",
    "tool_selection",
    "solution_with_tools",
    "pot",
    "react",
    "react_with_tools",
    "react_observation",
    "tool_template",
)


def placeholders(template: str) -> set[str]:
    """Names of all ``{identifier}`` slots in a template string."""
    return {m.group(1) for m in _PLACEHOLDER.finditer(template)}


def render_template(template: str, values: dict[str, object]) -> str:
    """Fill every placeholder; unknown extras are ignored, gaps are fatal."""
    missing = placeholders(template) - values.keys()
    if missing:
        raise TemplateError(
            "missing template values: " + ", ".join(sorted(missing))
        )
    return _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]), template)


@dataclass(frozen=True)
class TemplateSet:
    """All prompt templates for one run, loaded once and kept immutable."""

    texts: dict[str, str] = field(repr=False)
    source: str = "builtin"

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "TemplateSet":
        """Load templates from ``directory``, or the built-in set if None."""
        if directory is None:
            root = resources.files(__package__) / "templates"
            source = "builtin"
        else:
            root = Path(directory)
            source = str(directory)
        texts: dict[str, str] = {}
        for name in TEMPLATE_NAMES:
            entry = root / f"{name}.txt"
            try:
                texts[name] = entry.read_text(encoding="utf-8")
            except (FileNotFoundError, OSError) as exc:
                raise TemplateError(
                    f"template {name!r} not found under {source}: {exc}"
                ) from exc
        return cls(texts=texts, source=source)

    def render(self, name: str, **values: object) -> str:
        if name not in self.texts:
            raise TemplateError(f"unknown template: {name!r}")
        return render_template(self.texts[name], values)

    def digest(self) -> str:
        """Fingerprint of the full template set, for run manifests."""
        joined = "\x00".join(f"{n}\x01{self.texts[n]}" for n in TEMPLATE_NAMES)
        return short_hash(joined)
