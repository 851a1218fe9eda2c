"""Hierarchical tool selection: pick categories, then tools within them.

Both phases ask the model for a short rationale ending in a bracketed index
list. Parsing is strict about that last line and forgiving about everything
before it. Out-of-range indices are dropped with a note, never an error;
an unparseable reply selects nothing rather than aborting the question.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import SelectionParseError
from .llm import LlmRequest
from .store import Tool, Toolbox, table_of_contents
from .templates import TemplateSet

_INDEX_TOKEN = re.compile(r"\d+\Z")


@dataclass(frozen=True)
class SelectionConfig:
    max_categories: int = 1
    max_tools: int = 1
    include_examples: bool = True

    def __post_init__(self):
        if self.max_categories < 1 or self.max_tools < 1:
            raise ValueError("selection caps must be at least 1")


@dataclass
class CategoryChoice:
    category: str
    reply_raw: str
    tool_ids: list[str] = field(default_factory=list)


@dataclass
class SelectionTrace:
    category_reply_raw: str
    categories: list[str] = field(default_factory=list)
    per_category: list[CategoryChoice] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def tool_ids(self) -> list[str]:
        return [tid for choice in self.per_category for tid in choice.tool_ids]

    @property
    def empty(self) -> bool:
        return not self.tool_ids

    def to_dict(self) -> dict:
        return {
            "categories": self.categories,
            "tool_ids": self.tool_ids,
            "empty": self.empty,
            "notes": self.notes,
            "category_reply_raw": self.category_reply_raw,
            "per_category": [
                {
                    "category": c.category,
                    "tool_ids": c.tool_ids,
                    "reply_raw": c.reply_raw,
                }
                for c in self.per_category
            ],
        }


def parse_index_list(text: str) -> list[int]:
    """Indices from the last line shaped like ``[0, 2]``.

    The last line that starts with ``[`` and ends with ``]`` (after
    trimming) is authoritative; its content must be comma-separated
    non-negative integers, or nothing for an explicit empty selection.
    """
    for line in reversed(text.strip().splitlines()):
        line = line.strip()
        if not (line.startswith("[") and line.endswith("]")):
            continue
        inner = line[1:-1].strip()
        if not inner:
            return []
        indices = []
        for token in inner.split(","):
            token = token.strip()
            if not _INDEX_TOKEN.fullmatch(token):
                raise SelectionParseError(
                    f"non-integer index {token!r} in selection line {line!r}",
                    raw=text[-200:],
                )
            indices.append(int(token))
        return indices
    raise SelectionParseError(
        "no line of the form [i, j, ...] found in selection reply", raw=text[-200:]
    )


def render_index_list(indices: list[int]) -> str:
    """Inverse of parse_index_list for well-formed inputs."""
    return "[" + ", ".join(str(i) for i in indices) + "]"


def _resolve_indices(
    indices: list[int], limit: int, cap: int, what: str, notes: list[str]
) -> list[int]:
    kept: list[int] = []
    for index in indices:
        if index >= limit:
            notes.append(f"{what} index {index} out of range (have {limit}); dropped")
            continue
        if index in kept:
            continue
        kept.append(index)
    return kept[:cap]


def render_tool_block(tool: Tool, templates: TemplateSet, include_example: bool = True) -> str:
    """One tool as shown inside prompts, via the tool template."""
    if include_example:
        example_question = tool.example.question
        example_solution = tool.example.solution_source
    else:
        example_question = "(omitted)"
        example_solution = "(omitted)"
    return templates.render(
        "tool_template",
        description=tool.description,
        function=tool.function_source,
        example_question=example_question,
        example_solution=example_solution,
    )


def render_tool_listing(
    tools: list[Tool], templates: TemplateSet, include_examples: bool = True
) -> str:
    """Numbered listing for the tool-selection prompt."""
    blocks = [
        f"Skill {i}:\n" + render_tool_block(tool, templates, include_examples)
        for i, tool in enumerate(tools)
    ]
    return "\n\n".join(blocks)


def select_tools(
    question: str,
    toolbox: Toolbox,
    config: SelectionConfig,
    llm,
    templates: TemplateSet,
) -> SelectionTrace:
    """Two-phase selection for one question.

    Phase one picks up to ``max_categories`` categories from the table of
    contents; phase two picks up to ``max_tools`` tools inside each chosen
    category. An explicit ``[]`` or an unparseable reply at either phase
    narrows the selection instead of failing.
    """
    if not toolbox.categories:
        raise ValueError("cannot select from an empty toolbox")
    notes: list[str] = []
    category_prompt = templates.render(
        "category_selection",
        book=toolbox.meta.book_title,
        max_categories=config.max_categories,
        question=question,
        table_of_content=table_of_contents(toolbox),
    )
    category_reply = llm.complete(
        LlmRequest(prompt=category_prompt, purpose="selection")
    )
    try:
        raw_indices = parse_index_list(category_reply.text)
    except SelectionParseError as exc:
        notes.append(f"category reply unparseable, selecting nothing: {exc}")
        raw_indices = []
    kept = _resolve_indices(
        raw_indices, len(toolbox.categories), config.max_categories, "category", notes
    )
    trace = SelectionTrace(
        category_reply_raw=category_reply.text,
        categories=[toolbox.categories[i].name for i in kept],
        notes=notes,
    )

    for name in trace.categories:
        category = toolbox.category_by_name(name)
        if not category.tools:
            trace.per_category.append(CategoryChoice(category=name, reply_raw=""))
            notes.append(f"category {name!r} holds no tools; phase two skipped")
            continue
        tool_prompt = templates.render(
            "tool_selection",
            max_tools=config.max_tools,
            question=question,
            tools=render_tool_listing(
                list(category.tools), templates, config.include_examples
            ),
        )
        tool_reply = llm.complete(LlmRequest(prompt=tool_prompt, purpose="selection"))
        try:
            raw_tool_indices = parse_index_list(tool_reply.text)
        except SelectionParseError as exc:
            notes.append(f"tool reply for {name!r} unparseable, selecting nothing: {exc}")
            raw_tool_indices = []
        kept_tools = _resolve_indices(
            raw_tool_indices, len(category.tools), config.max_tools, "tool", notes
        )
        trace.per_category.append(
            CategoryChoice(
                category=name,
                reply_raw=tool_reply.text,
                tool_ids=[category.tools[i].id for i in kept_tools],
            )
        )
    return trace


def selected_tools(trace: SelectionTrace, toolbox: Toolbox) -> list[Tool]:
    return [toolbox.tool_by_id(tool_id) for tool_id in trace.tool_ids]
