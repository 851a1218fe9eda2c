"""Toolbox data model, persistence, stats, and similarity lookup.

A toolbox is an ordered list of categories, each holding verified tools in
creation order. Files are canonical JSON (sorted keys, two-space indent,
trailing newline), so saving the same toolbox twice is byte-identical and
load/save round-trips are exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ToolboxFormatError, ToolboxVersionError
from .util import canonical_json, compact_json, short_hash

SCHEMA_VERSION = 1

TOOL_STATUSES = ("verified", "refined")


@dataclass(frozen=True)
class DemoExample:
    question: str
    solution_source: str
    expected_answer: object


@dataclass(frozen=True)
class Tool:
    id: str
    category: str
    section: str
    description: str
    function_source: str
    example: DemoExample
    status: str  # "verified" passed as generated; "refined" passed after feedback
    lineage: str | None  # digest of the original draft when refined
    function_line_count: int

    def validate(self) -> None:
        if self.status not in TOOL_STATUSES:
            raise ToolboxFormatError(f"tool {self.id!r} has unknown status {self.status!r}")
        if (self.status == "refined") != (self.lineage is not None):
            raise ToolboxFormatError(
                f"tool {self.id!r}: lineage must be set exactly when status is 'refined'"
            )


@dataclass(frozen=True)
class ToolCategory:
    name: str
    tools: tuple[Tool, ...]


@dataclass(frozen=True)
class ToolboxMeta:
    book_title: str
    creator_model: str
    created_at: str
    forge_config_digest: str


@dataclass(frozen=True)
class Toolbox:
    meta: ToolboxMeta
    categories: tuple[ToolCategory, ...]

    def validate(self) -> None:
        seen_names: set[str] = set()
        seen_ids: set[str] = set()
        for category in self.categories:
            if not category.name.strip():
                raise ToolboxFormatError("category with an empty name")
            if category.name in seen_names:
                raise ToolboxFormatError(f"duplicate category name: {category.name!r}")
            seen_names.add(category.name)
            for tool in category.tools:
                tool.validate()
                if tool.id in seen_ids:
                    raise ToolboxFormatError(f"duplicate tool id: {tool.id!r}")
                seen_ids.add(tool.id)
                if tool.category != category.name:
                    raise ToolboxFormatError(
                        f"tool {tool.id!r} claims category {tool.category!r} but "
                        f"lives under {category.name!r}"
                    )

    def all_tools(self) -> list[Tool]:
        return [tool for category in self.categories for tool in category.tools]

    def category_names(self) -> list[str]:
        return [category.name for category in self.categories]

    def category_by_name(self, name: str) -> ToolCategory:
        for category in self.categories:
            if category.name == name:
                return category
        raise KeyError(name)

    def tool_by_id(self, tool_id: str) -> Tool:
        for tool in self.all_tools():
            if tool.id == tool_id:
                return tool
        raise KeyError(tool_id)

    def digest(self) -> str:
        return short_hash(compact_json(toolbox_to_dict(self)))


@dataclass(frozen=True)
class ToolboxStats:
    n_categories: int
    n_sections: int
    n_tools: int
    avg_function_lines: float


def _tool_to_dict(tool: Tool) -> dict:
    return {
        "id": tool.id,
        "category": tool.category,
        "section": tool.section,
        "description": tool.description,
        "function": tool.function_source,
        "example": {
            "question": tool.example.question,
            "solution": tool.example.solution_source,
            "answer": tool.example.expected_answer,
        },
        "status": tool.status,
        "lineage": tool.lineage,
        "function_line_count": tool.function_line_count,
    }


def _tool_from_dict(data: dict, where: str) -> Tool:
    try:
        example = data["example"]
        tool = Tool(
            id=data["id"],
            category=data["category"],
            section=data["section"],
            description=data["description"],
            function_source=data["function"],
            example=DemoExample(
                question=example["question"],
                solution_source=example["solution"],
                expected_answer=example["answer"],
            ),
            status=data["status"],
            lineage=data.get("lineage"),
            function_line_count=int(data["function_line_count"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ToolboxFormatError(f"{where}: {exc!r}") from exc
    return tool


def toolbox_to_dict(toolbox: Toolbox) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "meta": {
            "book_title": toolbox.meta.book_title,
            "creator_model": toolbox.meta.creator_model,
            "created_at": toolbox.meta.created_at,
            "forge_config_digest": toolbox.meta.forge_config_digest,
        },
        "categories": [
            {
                "name": category.name,
                "tools": [_tool_to_dict(tool) for tool in category.tools],
            }
            for category in toolbox.categories
        ],
    }


def toolbox_from_dict(data: dict) -> Toolbox:
    if not isinstance(data, dict):
        raise ToolboxFormatError("toolbox file must hold a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ToolboxVersionError(expected=SCHEMA_VERSION, found=version)
    try:
        meta_raw = data["meta"]
        meta = ToolboxMeta(
            book_title=meta_raw["book_title"],
            creator_model=meta_raw["creator_model"],
            created_at=meta_raw["created_at"],
            forge_config_digest=meta_raw["forge_config_digest"],
        )
        raw_categories = data["categories"]
    except (KeyError, TypeError) as exc:
        raise ToolboxFormatError(f"toolbox is missing required fields: {exc!r}") from exc
    if not isinstance(raw_categories, list):
        raise ToolboxFormatError("'categories' must be a list")
    categories = []
    for ci, raw_category in enumerate(raw_categories):
        where = f"categories[{ci}]"
        if not isinstance(raw_category, dict) or "name" not in raw_category:
            raise ToolboxFormatError(f"{where}: must be an object with a name")
        tools = tuple(
            _tool_from_dict(raw_tool, f"{where}.tools[{ti}]")
            for ti, raw_tool in enumerate(raw_category.get("tools", []))
        )
        categories.append(ToolCategory(name=raw_category["name"], tools=tools))
    toolbox = Toolbox(meta=meta, categories=tuple(categories))
    toolbox.validate()
    return toolbox


def save_toolbox(toolbox: Toolbox, path: str | Path) -> None:
    toolbox.validate()
    Path(path).write_text(canonical_json(toolbox_to_dict(toolbox)), encoding="utf-8")


def load_toolbox(path: str | Path) -> Toolbox:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ToolboxFormatError(f"toolbox file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ToolboxFormatError(f"toolbox file is not valid JSON: {path}: {exc}") from exc
    return toolbox_from_dict(data)


def toolbox_stats(toolbox: Toolbox) -> ToolboxStats:
    tools = toolbox.all_tools()
    sections = {(tool.category, tool.section) for tool in tools}
    if tools:
        avg = sum(tool.function_line_count for tool in tools) / len(tools)
    else:
        avg = 0.0
    return ToolboxStats(
        n_categories=len(toolbox.categories),
        n_sections=len(sections),
        n_tools=len(tools),
        avg_function_lines=avg,
    )


def table_of_contents(toolbox: Toolbox) -> str:
    """Numbered category list, one per line, matching selection indices."""
    return "\n".join(f"{i}. {name}" for i, name in enumerate(toolbox.category_names()))


# --- similarity lookup over tool descriptions -------------------------------
#
# Cosine similarity in plain Python, on embeddings supplied by the caller.
# Ties break toward the earlier tool in toolbox order, so rankings are
# completely determined by the inputs.


def _cosine(a, b) -> float:
    dot = 0.0
    norm_a = 0.0
    norm_b = 0.0
    for x, y in zip(a, b):
        dot += x * y
        norm_a += x * x
        norm_b += y * y
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / math.sqrt(norm_a * norm_b)


@dataclass(frozen=True)
class SimilarityIndex:
    """Tool description embeddings, in toolbox order."""

    tool_ids: tuple[str, ...]
    vectors: tuple[tuple[float, ...], ...]


def build_similarity_index(toolbox: Toolbox, embedder) -> SimilarityIndex:
    """Embed every tool description with ``embedder.embed(text)``."""
    tools = toolbox.all_tools()
    vectors = tuple(tuple(float(x) for x in embedder.embed(t.description)) for t in tools)
    return SimilarityIndex(tool_ids=tuple(t.id for t in tools), vectors=vectors)


def nearest_tools(
    index: SimilarityIndex, toolbox: Toolbox, embedder, question: str, k: int
) -> list[Tool]:
    """The k tools whose descriptions are most cosine-similar to the question."""
    if k <= 0:
        return []
    query = tuple(float(x) for x in embedder.embed(question))
    scored = [
        (-_cosine(query, vector), position)
        for position, vector in enumerate(index.vectors)
    ]
    scored.sort()
    chosen = scored[:k]
    by_id = {tool.id: tool for tool in toolbox.all_tools()}
    return [by_id[index.tool_ids[position]] for _, position in chosen]


def save_similarity_index(index: SimilarityIndex, path: str | Path) -> None:
    rows = [
        {"tool_id": tool_id, "vector": list(vector)}
        for tool_id, vector in zip(index.tool_ids, index.vectors)
    ]
    Path(path).write_text(canonical_json(rows), encoding="utf-8")


def load_similarity_index(path: str | Path) -> SimilarityIndex:
    try:
        rows = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ToolboxFormatError(f"bad similarity index file: {path}: {exc}") from exc
    return SimilarityIndex(
        tool_ids=tuple(row["tool_id"] for row in rows),
        vectors=tuple(tuple(float(x) for x in row["vector"]) for row in rows),
    )
