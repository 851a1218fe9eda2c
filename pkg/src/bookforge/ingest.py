"""Reference ingestion: books, snippets, and LLM-assisted organization.

Two kinds of input are accepted:

* structured books (markdown with ``#`` chapters and ``##`` sections, or an
  equivalent JSON document), parsed directly into a chapter/section tree;
* flat snippet collections, which get organized into the same tree shape by
  asking a model to propose categories and then assign each snippet.

All parsed structures are frozen dataclasses; nothing downstream mutates a
book after construction.
"""

from __future__ import annotations

import json
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import BookParseError, StructuredOutputError
from .jsonextract import extract_json_list, extract_json_value
from .templates import TemplateSet
from .util import estimate_tokens


@dataclass(frozen=True)
class Section:
    index: int
    title: str
    body: str
    approx_tokens: int

    @classmethod
    def make(cls, index: int, title: str, body: str) -> "Section":
        return cls(index=index, title=title, body=body, approx_tokens=estimate_tokens(body))


@dataclass(frozen=True)
class Chapter:
    index: int
    title: str
    sections: tuple[Section, ...]


@dataclass(frozen=True)
class ReferenceBook:
    title: str
    chapters: tuple[Chapter, ...]

    def validate(self) -> None:
        if not self.title.strip():
            raise BookParseError("book title is empty")
        if not self.chapters:
            raise BookParseError("book has no chapters")
        seen_chapters: set[str] = set()
        for chapter in self.chapters:
            if not chapter.title.strip():
                raise BookParseError(f"chapter {chapter.index} has an empty title")
            if chapter.title in seen_chapters:
                raise BookParseError(f"duplicate chapter title: {chapter.title!r}")
            seen_chapters.add(chapter.title)
            if not chapter.sections:
                raise BookParseError(f"chapter {chapter.title!r} has no sections")
            seen_sections: set[str] = set()
            for section in chapter.sections:
                if not section.title.strip():
                    raise BookParseError(
                        f"chapter {chapter.title!r} has a section with an empty title"
                    )
                if section.title in seen_sections:
                    raise BookParseError(
                        f"duplicate section title in chapter {chapter.title!r}: "
                        f"{section.title!r}"
                    )
                seen_sections.add(section.title)
                if not section.body.strip():
                    raise BookParseError(
                        f"section {section.title!r} in chapter {chapter.title!r} "
                        "has an empty body"
                    )


@dataclass(frozen=True)
class SnippetSet:
    """An unstructured pile of reference snippets plus a task label."""

    task_label: str
    snippets: tuple[str, ...]


def _build_book(title: str, chapters: list[tuple[str, list[tuple[str, str]]]]) -> ReferenceBook:
    built = tuple(
        Chapter(
            index=ci,
            title=ctitle,
            sections=tuple(
                Section.make(si, stitle, body) for si, (stitle, body) in enumerate(sections)
            ),
        )
        for ci, (ctitle, sections) in enumerate(chapters)
    )
    book = ReferenceBook(title=title, chapters=built)
    book.validate()
    return book


def parse_markdown_book(text: str, title: str = "Untitled") -> ReferenceBook:
    """Parse ``#`` chapters and ``##`` sections into a book.

    Prose before the first chapter heading is a structural error. Prose
    between a chapter heading and its first section becomes a synthetic
    "Overview" section so no reference text is silently dropped.
    """
    chapters: list[tuple[str, list[tuple[str, str]]]] = []
    current_body: list[str] = []
    current_section: str | None = None
    in_preamble = True

    def flush_section() -> None:
        nonlocal current_body, current_section
        if current_section is None:
            body = "\n".join(current_body).strip()
            if body:
                chapters[-1][1].insert(0, ("Overview", body))
        else:
            chapters[-1][1].append((current_section, "\n".join(current_body).strip()))
        current_body = []
        current_section = None

    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("## "):
            if in_preamble:
                raise BookParseError(
                    f"line {lineno}: section heading before any chapter heading"
                )
            flush_section()
            current_section = line[3:].strip()
        elif line.startswith("# "):
            if not in_preamble:
                flush_section()
            chapters.append((line[2:].strip(), []))
            in_preamble = False
        elif in_preamble:
            if line.strip():
                raise BookParseError(
                    f"line {lineno}: text before the first chapter heading"
                )
        else:
            current_body.append(line)
    if in_preamble:
        raise BookParseError("line 1: no chapter headings found (expected '# Title')")
    flush_section()
    return _build_book(title, chapters)


def parse_json_book(data: str | dict) -> ReferenceBook:
    """Parse the JSON book format: {title, chapters: [{title, sections: [{title, body}]}]}."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise BookParseError(f"invalid JSON book: {exc}") from exc
    if not isinstance(data, dict):
        raise BookParseError("JSON book must be an object at the top level")

    def expect_str(obj: dict, key: str, where: str) -> str:
        value = obj.get(key)
        if not isinstance(value, str):
            raise BookParseError(f"{where}: field {key!r} must be a string")
        return value

    title = expect_str(data, "title", "book")
    raw_chapters = data.get("chapters")
    if not isinstance(raw_chapters, list):
        raise BookParseError("book: field 'chapters' must be a list")
    chapters: list[tuple[str, list[tuple[str, str]]]] = []
    for ci, raw_chapter in enumerate(raw_chapters):
        where = f"chapters[{ci}]"
        if not isinstance(raw_chapter, dict):
            raise BookParseError(f"{where}: must be an object")
        ctitle = expect_str(raw_chapter, "title", where)
        raw_sections = raw_chapter.get("sections")
        if not isinstance(raw_sections, list):
            raise BookParseError(f"{where}: field 'sections' must be a list")
        sections: list[tuple[str, str]] = []
        for si, raw_section in enumerate(raw_sections):
            swhere = f"{where}.sections[{si}]"
            if not isinstance(raw_section, dict):
                raise BookParseError(f"{swhere}: must be an object")
            sections.append(
                (expect_str(raw_section, "title", swhere), expect_str(raw_section, "body", swhere))
            )
        chapters.append((ctitle, sections))
    return _build_book(title, chapters)


def parse_book(text: str, fmt: str | None = None, title: str | None = None) -> ReferenceBook:
    """Dispatch on format; by default JSON when the text opens with '{'."""
    if fmt is None:
        fmt = "json" if text.lstrip().startswith("{") else "markdown"
    if fmt == "json":
        return parse_json_book(text)
    if fmt == "markdown":
        return parse_markdown_book(text, title=title or "Untitled")
    raise BookParseError(f"unknown book format: {fmt!r}")


def book_to_dict(book: ReferenceBook) -> dict:
    return {
        "title": book.title,
        "chapters": [
            {
                "title": chapter.title,
                "sections": [
                    {"title": section.title, "body": section.body}
                    for section in chapter.sections
                ],
            }
            for chapter in book.chapters
        ],
    }


def load_snippets(text: str, task_label: str) -> SnippetSet:
    """Load snippets from a JSON list of strings or a ``---``-separated file.

    Blank segments are dropped; an input with no usable snippet is an error.
    """
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BookParseError(f"invalid JSON snippet list: {exc}") from exc
        if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
            raise BookParseError("JSON snippet file must be a list of strings")
        snippets = [x.strip() for x in data]
    else:
        snippets = [block.strip() for block in re.split(r"^---\s*$", text, flags=re.MULTILINE)]
    snippets = [s for s in snippets if s]
    if not snippets:
        raise BookParseError("no snippets found in input")
    return SnippetSet(task_label=task_label, snippets=tuple(snippets))


def _paragraph_pieces(body: str) -> list[str]:
    """Split at blank-line boundaries, keeping separators attached so the
    pieces concatenate back to the original text exactly."""
    pieces = []
    start = 0
    for match in re.finditer(r"\n{2,}", body):
        pieces.append(body[start:match.end()])
        start = match.end()
    if start < len(body):
        pieces.append(body[start:])
    return pieces or [body]


def chunk_section(section: Section, max_tokens: int) -> list[Section]:
    """Split an over-long section at paragraph boundaries into token-budgeted
    chunks whose bodies concatenate back to the original body exactly.

    A paragraph longer than the whole budget is hard-split at the character
    level. Sections already within budget come back unchanged.
    """
    if max_tokens <= 0:
        raise ValueError("max_tokens must be positive")
    if section.approx_tokens <= max_tokens:
        return [section]
    budget = 4 * max_tokens
    chunks: list[str] = []
    current = ""
    for piece in _paragraph_pieces(section.body):
        while len(piece) > budget:
            if current:
                chunks.append(current)
                current = ""
            chunks.append(piece[:budget])
            piece = piece[budget:]
        if current and len(current) + len(piece) > budget:
            chunks.append(current)
            current = piece
        else:
            current += piece
    if current:
        chunks.append(current)
    total = len(chunks)
    return [
        Section.make(i, f"{section.title} (part {i + 1} of {total})", body)
        for i, body in enumerate(chunks)
    ]


@dataclass
class OrganizeResult:
    """Outcome of organizing a snippet set into a book.

    ``unassigned`` lists the positions (in the original snippet order) whose
    assignment reply could not be parsed; those snippets are left out of the
    book rather than guessed at.
    """

    book: ReferenceBook
    proposed_categories: list[str]
    unassigned: list[int] = field(default_factory=list)
    category_reply_raw: str = ""


def organize_snippets(
    snippet_set: SnippetSet,
    llm,
    templates: TemplateSet,
    *,
    shuffle_seed: int | None = None,
    parallel_width: int = 4,
) -> OrganizeResult:
    """Organize flat snippets into a category/section tree via two prompts.

    One call proposes top-level categories; one call per snippet assigns it
    to at most two categories with a descriptive per-category name. Category
    order follows the proposal, with unproposed names the model used anyway
    appended in first-use order. Proposed categories that end up empty are
    dropped.
    """
    from .llm import LlmRequest  # local import to keep module deps one-way

    if not snippet_set.snippets:
        raise ValueError("cannot organize an empty snippet set")
    order = list(range(len(snippet_set.snippets)))
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(order)
    ordered = [snippet_set.snippets[i] for i in order]

    segments = "\n\n".join(ordered)
    category_prompt = templates.render(
        "category_generation", task=snippet_set.task_label, segments=segments
    )
    category_reply = llm.complete(LlmRequest(prompt=category_prompt, purpose="organization"))
    try:
        raw_categories = extract_json_list(category_reply.text)
    except ValueError as exc:
        raise StructuredOutputError(
            f"category proposal is not a JSON list: {exc}", raw=category_reply.text
        ) from exc
    proposed = [c.strip() for c in raw_categories if isinstance(c, str) and c.strip()]
    if not proposed:
        raise StructuredOutputError(
            "category proposal contained no usable names", raw=category_reply.text
        )
    categories_block = "\n".join(proposed)

    def assign(position: int) -> dict[str, str] | None:
        prompt = templates.render(
            "segment_assignment",
            task=snippet_set.task_label,
            categories=categories_block,
            rule=snippet_set.snippets[position],
        )
        reply = llm.complete(LlmRequest(prompt=prompt, purpose="organization"))
        try:
            value = extract_json_value(reply.text)
        except ValueError:
            return None
        if not isinstance(value, dict):
            return None
        cleaned = {
            str(k).strip(): str(v).strip()
            for k, v in value.items()
            if str(k).strip() and str(v).strip()
        }
        # The prompt allows at most two categories; keep the first two.
        return dict(list(cleaned.items())[:2]) or None

    positions = sorted(order)  # assignment iterates snippets in original order
    width = max(1, min(parallel_width, len(positions)))
    with ThreadPoolExecutor(max_workers=width) as pool:
        assignments = list(pool.map(assign, positions))

    category_order = list(proposed)
    buckets: dict[str, list[tuple[str, str]]] = {name: [] for name in proposed}
    unassigned: list[int] = []
    for position, assignment in zip(positions, assignments):
        if not assignment:
            unassigned.append(position)
            continue
        for category, section_name in assignment.items():
            if category not in buckets:
                category_order.append(category)
                buckets[category] = []
            bucket = buckets[category]
            existing = {title for title, _ in bucket}
            title = section_name
            k = 2
            while title in existing:
                title = f"{section_name} ({k})"
                k += 1
            bucket.append((title, snippet_set.snippets[position]))

    chapters = [(name, buckets[name]) for name in category_order if buckets[name]]
    if not chapters:
        raise StructuredOutputError(
            "no snippet could be assigned to any category", raw=category_reply.text
        )
    book = _build_book(snippet_set.task_label, chapters)
    return OrganizeResult(
        book=book,
        proposed_categories=proposed,
        unassigned=unassigned,
        category_reply_raw=category_reply.text,
    )
