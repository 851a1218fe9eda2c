"""Deterministic fixtures: a tiny book, recorded replies, and benchmarks.

Everything offline testing needs lives here: a miniature reference book, a
transcript of model replies that drives the whole forge pipeline through
known outcomes (pass, fail-then-fix, unparseable), a ten-question benchmark
with scripted solutions, and randomized toolbox generators for round-trip
and ranking tests. Builders render prompts with the same code paths the
pipeline uses, so transcript digests always line up.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from pathlib import Path

from .forge import ForgeConfig, ToolDraft, make_skill_json
from .ingest import ReferenceBook, parse_json_book
from .selection import render_tool_listing
from .solver import SolveConfig, build_solution_prompt
from .store import (
    DemoExample,
    Tool,
    ToolCategory,
    Toolbox,
    ToolboxMeta,
    table_of_contents,
)
from .templates import TemplateSet
from .util import canonical_json, prompt_digest
from .verifier import VerificationReport, render_feedback

FIXTURE_CREATED_AT = "2026-01-01T00:00:00Z"


def transcript_entry(purpose: str, prompt: str, response: str) -> dict:
    return {
        "purpose": purpose,
        "match": {"digest": prompt_digest(purpose, prompt)},
        "response": response,
    }


# --- miniature book ----------------------------------------------------------

_BOOK = {
    "title": "Applied Calibration Methods",
    "chapters": [
        {
            "title": "Offset Correction",
            "sections": [
                {
                    "title": "Constant Offsets",
                    "body": (
                        "Many instruments report readings displaced by a constant "
                        "offset. Adding the calibration constant restores the true "
                        "value. For a reading x and offset k, the corrected value "
                        "is x + k.\n\nExample: a reading of 10 with offset 2 "
                        "corrects to 12."
                    ),
                },
                {
                    "title": "Historical Notes on Offsets",
                    "body": (
                        "Early laboratories logged offsets by hand and applied "
                        "them at the end of each day. This section recounts that "
                        "practice without introducing any new procedure."
                    ),
                },
            ],
        },
        {
            "title": "Scale Correction",
            "sections": [
                {
                    "title": "Linear Scale Factors",
                    "body": (
                        "When a sensor's gain is off, every reading is scaled by "
                        "the same factor. Multiplying by the calibration factor f "
                        "recovers the true value: corrected = x * f.\n\nExample: "
                        "a reading of 6 with factor 3 becomes 18."
                    ),
                },
                {
                    "title": "Historical Notes on Scales",
                    "body": (
                        "Scale drift was once estimated against brass reference "
                        "weights. This section is purely descriptive."
                    ),
                },
            ],
        },
        {
            "title": "Drift Correction",
            "sections": [
                {
                    "title": "Linear Drift over Time",
                    "body": (
                        "Instruments drift as they warm up. With drift rate r per "
                        "hour, a reading taken after t hours overstates the value "
                        "by r * t; subtracting it compensates.\n\nExample: reading "
                        "20 after 4 hours with rate 0.5 corrects to 18."
                    ),
                },
                {
                    "title": "Historical Notes on Drift",
                    "body": (
                        "Drift tables used to be printed on the back of "
                        "instrument cases. No procedure is defined here."
                    ),
                },
            ],
        },
    ],
}


def miniature_book() -> ReferenceBook:
    """Three chapters by two sections; small enough to never chunk."""
    return parse_json_book(json.loads(json.dumps(_BOOK)))


# --- forge fixtures -----------------------------------------------------------
#
# Per chapter: the first section's reply parses into one draft that passes
# verification directly and one whose example disagrees with its function
# until a refinement fixes it; the second section's reply has no JSON at
# all. Forging the miniature book therefore yields exactly six tools,
# three verified and three refined, with one parse failure per chapter.


def _good_draft(ci: int) -> tuple[dict, int]:
    offset = ci + 2
    function = (
        f"def shift_reading_{ci}(x):\n"
        f'    """\n'
        f"    Parameters:\n"
        f"    - x (float): The raw reading.\n"
        f"    Returns:\n"
        f"    - float: The reading with the calibration offset applied.\n"
        f'    """\n'
        f"    return x + {offset}"
    )
    solution = (
        "def solution():\n"
        "    # Correct a raw reading of 10.\n"
        f"    return shift_reading_{ci}(10)"
    )
    answer = 10 + offset
    record = {
        "description": f"Apply a constant calibration offset of {offset} to a raw reading.",
        "function": function,
        "example": {
            "question": f"A sensor reads 10 and its calibration offset is {offset}. "
            "What is the corrected value?",
            "solution": solution,
            "answer": answer,
        },
    }
    return record, answer


def _broken_and_fixed(ci: int) -> tuple[dict, dict, int, int]:
    factor = ci + 3
    broken_function = (
        f"def rescale_reading_{ci}(x):\n"
        f'    """\n'
        f"    Parameters:\n"
        f"    - x (float): The raw reading.\n"
        f"    Returns:\n"
        f"    - float: The reading multiplied by the calibration factor.\n"
        f'    """\n'
        f"    return x + {factor}"
    )
    fixed_function = broken_function.replace(f"return x + {factor}", f"return x * {factor}")
    solution = (
        "def solution():\n"
        "    # Rescale a raw reading of 6.\n"
        f"    return rescale_reading_{ci}(6)"
    )
    answer = 6 * factor
    observed_when_broken = 6 + factor
    base = {
        "description": f"Multiply a raw reading by a calibration factor of {factor}.",
        "example": {
            "question": f"A sensor reads 6 and its calibration factor is {factor}. "
            "What is the rescaled value?",
            "solution": solution,
            "answer": answer,
        },
    }
    broken = {**base, "function": broken_function}
    fixed = {**base, "function": fixed_function}
    return broken, fixed, answer, observed_when_broken


def _draft_from_record(record: dict) -> ToolDraft:
    return ToolDraft(
        description=record["description"],
        function_source=record["function"],
        example=DemoExample(
            question=record["example"]["question"],
            solution_source=record["example"]["solution"],
            expected_answer=record["example"]["answer"],
        ),
    )


def forge_transcript(
    book: ReferenceBook, config: ForgeConfig, templates: TemplateSet
) -> list[dict]:
    """Recorded replies that drive the forge over the miniature book."""
    entries: list[dict] = []
    for ci, chapter in enumerate(book.chapters):
        lead, trail = chapter.sections[0], chapter.sections[1]

        good, _ = _good_draft(ci)
        broken, fixed, answer, observed = _broken_and_fixed(ci)
        generation_prompt = templates.render(
            "tool_generation", chapter=chapter.title, book=book.title, text=lead.body
        )
        generation_reply = (
            "Here are the skills I extracted from this section.\n\n"
            + json.dumps([good, broken], indent=2)
        )
        entries.append(transcript_entry("generation", generation_prompt, generation_reply))

        feedback = render_feedback(
            VerificationReport(
                exec_ok=True,
                output_ok=False,
                expected=answer,
                observed=observed,
                error_kind=None,
                traceback=None,
                duration_ms=0.0,
            )
        )
        refinement_prompt = templates.render(
            "tool_refinement",
            skill=make_skill_json(_draft_from_record(broken)),
            feedback=feedback,
        )
        entries.append(
            transcript_entry("refinement", refinement_prompt, json.dumps(fixed, indent=2))
        )

        trail_prompt = templates.render(
            "tool_generation", chapter=chapter.title, book=book.title, text=trail.body
        )
        entries.append(
            transcript_entry(
                "generation",
                trail_prompt,
                "After reviewing this section I could not identify any reusable "
                "skills; it is purely historical.",
            )
        )
    return entries


# --- verification fixture ------------------------------------------------------

_CAPM_FUNCTION = '''def expected_return(rf, beta, rm):
    """
    Parameters:
    - rf (float): The risk-free rate.
    - beta (float): The beta of the portfolio.
    - rm (float): The return on the market.
    Returns:
    - float: The expected return.
    """
    return rf + beta * (rm - rf)'''

_CAPM_SOLUTION = """def solution():
    # Given values.
    rf = 0.028
    beta = 1.4
    rm = 0.086
    # Calculate the expected return.
    result = expected_return(rf, beta, rm)
    # Return the result.
    return result"""


def capm_draft() -> ToolDraft:
    """An asset-pricing tool whose example returns 0.1092 against 0.109."""
    return ToolDraft(
        description=(
            "Compute the expected return using the Capital Asset Pricing "
            "Model (CAPM) formula."
        ),
        function_source=_CAPM_FUNCTION,
        example=DemoExample(
            question=(
                "Suppose a stock has the following information. It is listed on "
                "the London stock exchange and operates throughout Europe. The "
                "yield on a UK 10 year treasury is 2.8%. The stock in question "
                "will earn 8.6% as per historical data. The Beta for the stock "
                "is 1.4, i.e., it is 140% volatile to the changes in the "
                "general stock market. What is the expected rate of return?"
            ),
            solution_source=_CAPM_SOLUTION,
            expected_answer=0.109,
        ),
    )


def mutate_sign(source: str, seed: int) -> str:
    """Flip one additive sign on the function's return line, seeded."""
    lines = source.splitlines()
    return_lines = [i for i, line in enumerate(lines) if line.lstrip().startswith("return")]
    if not return_lines:
        raise ValueError("source has no return line to mutate")
    target = return_lines[-1]
    sites = [(m.start(), m.group()) for m in re.finditer(r" [+-] ", lines[target])]
    if not sites:
        raise ValueError("return line has no additive sign to flip")
    position, op = random.Random(seed).choice(sites)
    flipped = " - " if op == " + " else " + "
    lines[target] = lines[target][:position] + flipped + lines[target][position + 3:]
    return "\n".join(lines)


# --- benchmark fixtures ---------------------------------------------------------

_N_BENCH = 10
_WRONG_IDS = ("q09", "q10")  # answered without tools, and wrongly


def benchmark_items_raw() -> list[dict]:
    """Ten questions; the last two get scripted wrong answers (accuracy 0.8)."""
    records = []
    for k in range(1, _N_BENCH + 1):
        a, b = 10 * k, k + 1
        records.append(
            {
                "id": f"q{k:02d}",
                "question": (
                    f"Instrument {k} reads {a} and its calibration constant is "
                    f"{b}. What corrected value does it report after adding the "
                    "constant?"
                ),
                "answer": a + b,
                "answer_type": "numeric",
                "tolerance": 0.0,
            }
        )
    return records


def write_benchmark(path: str | Path) -> Path:
    path = Path(path)
    lines = [json.dumps(record) for record in benchmark_items_raw()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def eval_transcript(
    toolbox: Toolbox,
    templates: TemplateSet,
    *,
    category_caps: tuple[int, ...] = (1, 2),
    tool_caps: tuple[int, ...] = (1, 2),
    include_examples: bool = True,
    solve_config: SolveConfig | None = None,
) -> list[dict]:
    """Recorded selection and solution replies for the synthetic benchmark.

    Selection prompts differ per cap value, so entries are recorded for
    every cap in the given grids; the scripted tool choice is always the
    first tool of one category, keeping solution prompts identical across
    grid cells.
    """
    solve_config = solve_config or SolveConfig()
    entries: list[dict] = []
    toc = table_of_contents(toolbox)
    for record in benchmark_items_raw():
        question = record["question"]
        wrong = record["id"] in _WRONG_IDS
        category_index = (int(record["id"][1:]) - 1) % len(toolbox.categories)

        for cap in category_caps:
            prompt = templates.render(
                "category_selection",
                book=toolbox.meta.book_title,
                max_categories=cap,
                question=question,
                table_of_content=toc,
            )
            if wrong:
                reply = "None of the chapters cover this instrument.\n[]"
            else:
                reply = (
                    f"Chapter {category_index} addresses exactly this correction.\n"
                    f"[{category_index}]"
                )
            entries.append(transcript_entry("selection", prompt, reply))

        if wrong:
            tools = []
        else:
            category = toolbox.categories[category_index]
            tools = [category.tools[0]]
            for cap in tool_caps:
                prompt = templates.render(
                    "tool_selection",
                    max_tools=cap,
                    question=question,
                    tools=render_tool_listing(
                        list(category.tools), templates, include_examples
                    ),
                )
                entries.append(
                    transcript_entry(
                        "selection", prompt, "Skill 0 applies directly.\n[0]"
                    )
                )

        answer = record["answer"] + (1 if wrong else 0)
        solution_prompt = build_solution_prompt(question, tools, solve_config, templates)
        solution_reply = (
            "```python\n"
            "def solution():\n"
            f"    return {answer}\n"
            "```"
        )
        entries.append(transcript_entry("solution", solution_prompt, solution_reply))
    return entries


# --- randomized toolboxes --------------------------------------------------------

_WORDS = (
    "flux", "gauge", "drift", "offset", "span", "probe", "filter", "kernel",
    "ratio", "decay", "phase", "yield", "noise", "gain", "bias", "mode",
)


def _random_text(rng: random.Random, n_words: int) -> str:
    return " ".join(rng.choice(_WORDS) for _ in range(n_words))


def random_toolbox(seed: int, *, n_categories: int | None = None,
                   tools_per_category: int | None = None) -> Toolbox:
    """A structurally valid toolbox with randomized content."""
    rng = random.Random(seed)
    n_categories = n_categories or rng.randint(1, 5)
    categories = []
    counter = 0
    for ci in range(n_categories):
        name = f"{_random_text(rng, 2).title()} {ci}"
        n_tools = tools_per_category if tools_per_category is not None else rng.randint(0, 4)
        tools = []
        for _ in range(n_tools):
            refined = rng.random() < 0.3
            value = rng.randint(1, 99)
            function = (
                f"def tool_fn_{counter}(x):\n"
                f"    # {_random_text(rng, 4)}\n"
                f"    return x + {value}"
            )
            tools.append(
                Tool(
                    id=f"box-{seed}/{ci}/{counter}",
                    category=name,
                    section=f"Section {_random_text(rng, 1)} {counter}",
                    description=f"{_random_text(rng, 6)} ({counter})",
                    function_source=function,
                    example=DemoExample(
                        question=f"What is {value} plus x for x = 1?",
                        solution_source=(
                            f"def solution():\n    return tool_fn_{counter}(1)"
                        ),
                        expected_answer=value + 1,
                    ),
                    status="refined" if refined else "verified",
                    lineage=f"{seed:08x}{counter:04x}" if refined else None,
                    function_line_count=3,
                )
            )
            counter += 1
        categories.append(ToolCategory(name=name, tools=tuple(tools)))
    toolbox = Toolbox(
        meta=ToolboxMeta(
            book_title=f"Randomized Reference {seed}",
            creator_model="fixture",
            created_at=FIXTURE_CREATED_AT,
            forge_config_digest=f"{seed:016x}"[:12],
        ),
        categories=tuple(categories),
    )
    toolbox.validate()
    return toolbox


class HashEmbedder:
    """Deterministic text embedding with no model behind it.

    Each dimension is a hash of the text, mapped into [-1, 1). Nearby
    texts are not semantically close; ranking tests only need stable,
    reproducible vectors.
    """

    def __init__(self, dim: int = 12):
        self.dim = dim

    def embed(self, text: str) -> list[float]:
        vector = []
        for i in range(self.dim):
            digest = hashlib.sha256(f"{i}:{text}".encode("utf-8")).digest()
            vector.append(int.from_bytes(digest[:8], "big") / 2**63 - 1.0)
        return vector


# --- fixture tree on disk ---------------------------------------------------------


def write_fixture_tree(outdir: str | Path) -> dict[str, Path]:
    """Materialize every offline fixture under one directory.

    Produces the miniature book, a combined transcript covering both the
    forge run and benchmark evaluation (all grid cells), and the benchmark
    itself. The toolbox needed for the evaluation entries is produced by
    actually running the forge against an in-process worker.
    """
    import sys

    from .llm import LlmClient, ProviderConfig
    from .forge import forge_toolbox
    from .sandbox import SandboxPool
    from .store import save_toolbox

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    templates = TemplateSet.load()
    book = miniature_book()
    config = ForgeConfig()

    book_path = outdir / "book.json"
    book_path.write_text(
        canonical_json(
            {
                "title": book.title,
                "chapters": [
                    {
                        "title": c.title,
                        "sections": [
                            {"title": s.title, "body": s.body} for s in c.sections
                        ],
                    }
                    for c in book.chapters
                ],
            }
        ),
        encoding="utf-8",
    )

    forge_entries = forge_transcript(book, config, templates)
    forge_path = outdir / "forge_transcript.json"
    forge_path.write_text(canonical_json(forge_entries), encoding="utf-8")

    client = LlmClient(ProviderConfig(kind="mock", transcript_path=str(forge_path)))
    with SandboxPool([sys.executable, "-m", "bookforge.fake_worker"]) as pool:
        toolbox, report = forge_toolbox(
            book,
            config,
            client,
            pool,
            templates,
            creator_model="fixture",
            created_at=FIXTURE_CREATED_AT,
        )
    toolbox_path = outdir / "toolbox.json"
    save_toolbox(toolbox, toolbox_path)
    report_path = outdir / "forge_report.json"
    report_path.write_text(canonical_json(report.to_dict()), encoding="utf-8")

    benchmark_path = write_benchmark(outdir / "benchmark.jsonl")
    combined = forge_entries + eval_transcript(toolbox, templates)
    transcript_path = outdir / "transcript.json"
    transcript_path.write_text(canonical_json(combined), encoding="utf-8")

    return {
        "book": book_path,
        "forge_transcript": forge_path,
        "toolbox": toolbox_path,
        "forge_report": report_path,
        "benchmark": benchmark_path,
        "transcript": transcript_path,
    }
