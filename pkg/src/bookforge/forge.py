"""Tool creation: generate drafts from sections, verify, refine, assemble.

Per section the flow is: render the generation prompt, parse the reply into
at most ``m`` drafts, verify each draft's demo example in the sandbox, and
give failing drafts a bounded number of feedback-driven refinement rounds.
Drafts that still fail are rejected. Surviving tools land in a toolbox that
mirrors the book hierarchy (chapter -> category, section -> section).
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

from .errors import RefineParseError, ToolParseError
from .ingest import Chapter, ReferenceBook, Section, chunk_section
from .jsonextract import extract_json_list, extract_json_value
from .llm import LlmRequest
from .store import (
    DemoExample,
    Tool,
    ToolCategory,
    Toolbox,
    ToolboxMeta,
)
from .templates import TemplateSet
from .util import compact_json, short_hash

_TOP_LEVEL_DEF = re.compile(r"^def\s+\w+", re.MULTILINE)


@dataclass(frozen=True)
class ToolDraft:
    description: str
    function_source: str
    example: DemoExample


@dataclass(frozen=True)
class ForgeConfig:
    tools_per_section: int = 2
    refine_rounds: int = 1
    verify_tolerance: float = 0.03
    verify_timeout_s: float = 60.0
    section_token_budget: int = 1000
    parallel_width: int = 4

    def __post_init__(self):
        if self.tools_per_section < 1:
            raise ValueError("tools_per_section must be at least 1")
        if self.refine_rounds < 0:
            raise ValueError("refine_rounds must be non-negative")
        if not 0 <= self.verify_tolerance:
            raise ValueError("verify_tolerance must be non-negative")
        if self.section_token_budget < 1:
            raise ValueError("section_token_budget must be positive")
        if self.parallel_width < 1:
            raise ValueError("parallel_width must be at least 1")

    def digest(self) -> str:
        # parallel_width cannot change what gets forged, only how fast,
        # so two runs differing only in width share a digest.
        record = {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name != "parallel_width"
        }
        return short_hash(compact_json(record))


def _draft_from_record(record: object, where: str) -> ToolDraft:
    if not isinstance(record, dict):
        raise ToolParseError(f"{where}: expected a JSON object")
    for key in ("description", "function", "example"):
        if key not in record:
            raise ToolParseError(f"{where}: missing field {key!r}")
    example = record["example"]
    if not isinstance(example, dict):
        raise ToolParseError(f"{where}: 'example' must be an object")
    for key in ("question", "solution", "answer"):
        if key not in example:
            raise ToolParseError(f"{where}: missing field 'example.{key}'")
    description = record["description"]
    function_source = record["function"]
    if not isinstance(description, str) or not description.strip():
        raise ToolParseError(f"{where}: 'description' must be a non-empty string")
    if not isinstance(function_source, str):
        raise ToolParseError(f"{where}: 'function' must be a string")
    if len(_TOP_LEVEL_DEF.findall(function_source)) != 1:
        raise ToolParseError(
            f"{where}: 'function' must define exactly one top-level function"
        )
    if not isinstance(example["question"], str) or not isinstance(example["solution"], str):
        raise ToolParseError(f"{where}: example question and solution must be strings")
    return ToolDraft(
        description=description,
        function_source=function_source,
        example=DemoExample(
            question=example["question"],
            solution_source=example["solution"],
            expected_answer=example["answer"],
        ),
    )


def parse_tool_json(text: str) -> list[ToolDraft]:
    """Parse a generation reply into tool drafts.

    The reply must contain a JSON list of tool records somewhere in it;
    fences and prose around the list are tolerated. Structural problems
    raise ToolParseError carrying the raw reply.
    """
    try:
        records = extract_json_list(text)
    except ValueError as exc:
        raise ToolParseError(f"no JSON tool list in reply: {exc}", raw=text) from exc
    drafts = []
    for i, record in enumerate(records):
        try:
            drafts.append(_draft_from_record(record, f"tools[{i}]"))
        except ToolParseError as exc:
            raise ToolParseError(str(exc), raw=text) from exc
    return drafts


def parse_refined_tool(text: str) -> ToolDraft:
    """Parse a refinement reply: exactly one corrected tool record."""
    try:
        value = extract_json_value(text)
    except ValueError as exc:
        raise RefineParseError(f"no JSON object in refinement reply: {exc}", raw=text) from exc
    if isinstance(value, list):
        raise RefineParseError(
            "refinement reply is a JSON list; expected a single tool object", raw=text
        )
    try:
        return _draft_from_record(value, "refined tool")
    except ToolParseError as exc:
        raise RefineParseError(str(exc), raw=text) from exc


def make_skill_json(draft: ToolDraft) -> str:
    """The draft as JSON, as shown to the model in the refinement prompt."""
    return json.dumps(
        {
            "description": draft.description,
            "function": draft.function_source,
            "example": {
                "question": draft.example.question,
                "solution": draft.example.solution_source,
                "answer": draft.example.expected_answer,
            },
        },
        indent=2,
        ensure_ascii=False,
    )


def draft_digest(draft: ToolDraft) -> str:
    return short_hash(compact_json(json.loads(make_skill_json(draft))))


def generate_drafts(
    section: Section,
    config: ForgeConfig,
    llm,
    templates: TemplateSet,
    *,
    book_title: str,
    chapter_title: str,
) -> list[ToolDraft]:
    """One generation call for one (possibly chunked) section."""
    prompt = templates.render(
        "tool_generation", chapter=chapter_title, book=book_title, text=section.body
    )
    reply = llm.complete(LlmRequest(prompt=prompt, purpose="generation"))
    drafts = parse_tool_json(reply.text)
    # The prompt asks for at most tools_per_section; overflow is dropped,
    # not rejected, so a chatty model costs tools rather than sections.
    return drafts[: config.tools_per_section]


def refine_draft(draft: ToolDraft, feedback: str, llm, templates: TemplateSet) -> ToolDraft:
    if not feedback.strip():
        raise ValueError("refinement needs non-empty feedback")
    prompt = templates.render(
        "tool_refinement", skill=make_skill_json(draft), feedback=feedback
    )
    reply = llm.complete(LlmRequest(prompt=prompt, purpose="refinement"))
    return parse_refined_tool(reply.text)


_COUNT_FIELDS = ("generated", "direct_pass", "refined_pass", "rejected", "parse_failures")


@dataclass
class SectionOutcome:
    chapter: str
    section: str
    generated: int = 0
    direct_pass: int = 0
    refined_pass: int = 0
    rejected: int = 0
    parse_failures: int = 0

    def check_conservation(self) -> None:
        kept = self.direct_pass + self.refined_pass + self.rejected
        if self.generated != kept:
            raise AssertionError(
                f"section {self.chapter!r}/{self.section!r}: generated "
                f"{self.generated} != {kept} accounted for"
            )


@dataclass
class ForgeReport:
    """Per-section accounting for one forge run.

    ``generated`` counts parsed drafts and always equals
    ``direct_pass + refined_pass + rejected`` at every level; replies that
    never parsed are counted separately under ``parse_failures``.
    """

    sections: list[SectionOutcome] = field(default_factory=list)

    def check_conservation(self) -> None:
        for outcome in self.sections:
            outcome.check_conservation()

    def _sum(self, outcomes) -> dict:
        totals = {name: 0 for name in _COUNT_FIELDS}
        for outcome in outcomes:
            for name in _COUNT_FIELDS:
                totals[name] += getattr(outcome, name)
        return totals

    def totals(self) -> dict:
        return self._sum(self.sections)

    def per_chapter(self) -> dict[str, dict]:
        chapters: dict[str, list[SectionOutcome]] = {}
        for outcome in self.sections:
            chapters.setdefault(outcome.chapter, []).append(outcome)
        return {name: self._sum(group) for name, group in chapters.items()}

    def to_dict(self) -> dict:
        return {
            "sections": [
                {
                    "chapter": o.chapter,
                    "section": o.section,
                    **{name: getattr(o, name) for name in _COUNT_FIELDS},
                }
                for o in self.sections
            ],
            "per_chapter": self.per_chapter(),
            "total": self.totals(),
        }


def _slug(text: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")
    return slug or "untitled"


def tool_id(book_title: str, chapter: Chapter, section: Section, ordinal: int) -> str:
    return (
        f"{_slug(book_title)}/{chapter.index:02d}-{_slug(chapter.title)}/"
        f"{section.index:02d}-{_slug(section.title)}/{ordinal}"
    )


def _function_line_count(source: str) -> int:
    return len(source.strip().splitlines())


def forge_section(
    book_title: str,
    chapter: Chapter,
    section: Section,
    config: ForgeConfig,
    llm,
    sandbox,
    templates: TemplateSet,
) -> tuple[SectionOutcome, list[Tool]]:
    from .verifier import render_feedback, verify_tool

    outcome = SectionOutcome(chapter=chapter.title, section=section.title)
    drafts: list[ToolDraft] = []
    for chunk in chunk_section(section, config.section_token_budget):
        try:
            drafts.extend(
                generate_drafts(
                    chunk,
                    config,
                    llm,
                    templates,
                    book_title=book_title,
                    chapter_title=chapter.title,
                )
            )
        except ToolParseError:
            outcome.parse_failures += 1
    drafts = drafts[: config.tools_per_section]
    outcome.generated = len(drafts)

    tools: list[Tool] = []
    for ordinal, draft in enumerate(drafts):
        report = verify_tool(
            draft, sandbox, config.verify_tolerance, timeout_s=config.verify_timeout_s
        )
        final: ToolDraft | None = draft if report.passed else None
        status = "verified"
        lineage = None
        if final is None:
            current = draft
            for _ in range(config.refine_rounds):
                try:
                    candidate = refine_draft(
                        current, render_feedback(report), llm, templates
                    )
                except RefineParseError:
                    break
                current = candidate
                report = verify_tool(
                    candidate, sandbox, config.verify_tolerance,
                    timeout_s=config.verify_timeout_s,
                )
                if report.passed:
                    final = candidate
                    break
            if final is None:
                outcome.rejected += 1
                continue
            status = "refined"
            lineage = draft_digest(draft)
            outcome.refined_pass += 1
        else:
            outcome.direct_pass += 1
        tools.append(
            Tool(
                id=tool_id(book_title, chapter, section, ordinal),
                category=chapter.title,
                section=section.title,
                description=final.description,
                function_source=final.function_source,
                example=final.example,
                status=status,
                lineage=lineage,
                function_line_count=_function_line_count(final.function_source),
            )
        )
    return outcome, tools


def forge_toolbox(
    book: ReferenceBook,
    config: ForgeConfig,
    llm,
    sandbox,
    templates: TemplateSet,
    *,
    creator_model: str = "",
    created_at: str = "",
) -> tuple[Toolbox, ForgeReport]:
    """Run the whole creation pipeline over a book.

    Sections are processed with bounded parallelism but reported in book
    order. Nothing below the book level is fatal: sections that produce
    no usable tools simply contribute zeros to the report.
    """
    book.validate()
    jobs = [
        (chapter, section) for chapter in book.chapters for section in chapter.sections
    ]

    def run_job(job):
        chapter, section = job
        return forge_section(
            book.title, chapter, section, config, llm, sandbox, templates
        )

    width = max(1, min(config.parallel_width, len(jobs)))
    if width == 1:
        results = [run_job(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=width) as pool:
            results = list(pool.map(run_job, jobs))

    report = ForgeReport(sections=[outcome for outcome, _ in results])
    report.check_conservation()

    tools_by_chapter: dict[str, list[Tool]] = {c.title: [] for c in book.chapters}
    for (chapter, _), (_, tools) in zip(jobs, results):
        tools_by_chapter[chapter.title].extend(tools)
    categories = tuple(
        ToolCategory(name=chapter.title, tools=tuple(tools_by_chapter[chapter.title]))
        for chapter in book.chapters
    )
    toolbox = Toolbox(
        meta=ToolboxMeta(
            book_title=book.title,
            creator_model=creator_model,
            created_at=created_at,
            forge_config_digest=config.digest(),
        ),
        categories=categories,
    )
    toolbox.validate()
    return toolbox, report
