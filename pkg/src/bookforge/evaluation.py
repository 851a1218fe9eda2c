"""Benchmark loading, scoring, evaluation runs, and grid sweeps.

Benchmarks are JSONL, one question per line. A run selects tools and
solves every item, scores predictions against gold answers, and reports
accuracy plus a manifest of everything that determined the outcome. With
a replayed transcript and a fixed seed, two runs of the same benchmark
produce byte-identical results (timings excluded).
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import BenchmarkLoadError, EvalError, SandboxError, TransportError
from .llm import UsageLedger
from .selection import SelectionConfig, select_tools, selected_tools
from .solver import SolveConfig, SolveTrace, render_question_block, solve
from .store import Toolbox
from .templates import TemplateSet
from .util import canonical_json
from .verifier import coerce_number, compare_answers

ANSWER_TYPES = ("numeric", "multiple_choice", "text")


@dataclass(frozen=True)
class BenchmarkItem:
    id: str
    question: str
    gold_answer: object
    answer_type: str = "numeric"
    tolerance: float = 0.0
    data_description: str | None = None
    data_files: tuple[str, ...] = ()


def _normalize_choice(value: object) -> str:
    """Keep only alphanumerics, casefolded: 'b)' and 'B' both become 'b'."""
    return "".join(ch for ch in str(value) if ch.isalnum()).casefold()


def score(predicted: object, item: BenchmarkItem) -> bool:
    """Gold-relative correctness for one item; a missing prediction fails."""
    if predicted is None:
        return False
    if item.answer_type == "numeric":
        return compare_answers(predicted, item.gold_answer, item.tolerance)
    if item.answer_type == "multiple_choice":
        normalized = _normalize_choice(predicted)
        return bool(normalized) and normalized == _normalize_choice(item.gold_answer)
    return str(predicted).strip().casefold() == str(item.gold_answer).strip().casefold()


def load_benchmark(path: str | Path) -> list[BenchmarkItem]:
    """Read a JSONL benchmark; every problem is reported with its line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise BenchmarkLoadError(f"cannot read benchmark: {exc}") from exc
    items: list[BenchmarkItem] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BenchmarkLoadError(f"line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise BenchmarkLoadError(f"line {lineno}: record must be an object")

        def fail(reason: str):
            return BenchmarkLoadError(f"line {lineno}: {reason}")

        if "id" not in record or str(record["id"]).strip() == "":
            raise fail("missing id")
        item_id = str(record["id"])
        if item_id in seen_ids:
            raise fail(f"duplicate id {item_id!r}")
        seen_ids.add(item_id)
        question = record.get("question")
        if not isinstance(question, str) or not question.strip():
            raise fail("missing or empty question")
        answer_type = record.get("answer_type", "numeric")
        if answer_type not in ANSWER_TYPES:
            raise fail(f"unknown answer_type {answer_type!r}")
        if "answer" not in record:
            raise fail("missing answer")
        gold = record["answer"]
        if answer_type == "numeric":
            gold_n = coerce_number(gold)
            if gold_n is None:
                raise fail(f"numeric answer {gold!r} does not parse as a number")
            gold = gold_n
        elif answer_type == "multiple_choice":
            token = str(gold).strip()
            if not token or " " in token:
                raise fail("multiple_choice answer must be a single token")
        tolerance = record.get("tolerance", 0.0)
        if not isinstance(tolerance, (int, float)) or tolerance < 0:
            raise fail("tolerance must be a non-negative number")
        data_files = record.get("data_files", [])
        if not isinstance(data_files, list) or not all(isinstance(p, str) for p in data_files):
            raise fail("data_files must be a list of paths")
        resolved = tuple(str((path.parent / p)) for p in data_files)
        for p in resolved:
            if not Path(p).exists():
                raise fail(f"data file not found: {p}")
        items.append(
            BenchmarkItem(
                id=item_id,
                question=question,
                gold_answer=gold,
                answer_type=answer_type,
                tolerance=float(tolerance),
                data_description=record.get("data_description"),
                data_files=resolved,
            )
        )
    if not items:
        raise BenchmarkLoadError(f"benchmark {path} holds no items")
    return items


@dataclass
class ItemResult:
    id: str
    predicted: object
    correct: bool
    fallback_used: bool
    duration_ms: float
    infra_error: str | None = None

    def to_dict(self, include_durations: bool = True) -> dict:
        data = {
            "id": self.id,
            "predicted": self.predicted,
            "correct": self.correct,
            "fallback_used": self.fallback_used,
            "infra_error": self.infra_error,
        }
        if include_durations:
            data["duration_ms"] = self.duration_ms
        return data


@dataclass
class EvalResult:
    accuracy: float
    items: list[ItemResult]
    usage: dict
    manifest: dict
    wall_ms: float
    traces: list[SolveTrace] = field(default_factory=list)

    def to_dict(self, include_durations: bool = True) -> dict:
        usage = self.usage
        if not include_durations:
            usage = {
                "by_purpose": {
                    p: {k: v for k, v in row.items() if k != "wall_ms"}
                    for p, row in usage["by_purpose"].items()
                },
                "total": {k: v for k, v in usage["total"].items() if k != "wall_ms"},
            }
        data = {
            "accuracy": self.accuracy,
            "items": [item.to_dict(include_durations) for item in self.items],
            "usage": usage,
            "manifest": self.manifest,
        }
        if include_durations:
            data["wall_ms"] = self.wall_ms
        return data

    def to_json(self, include_durations: bool = True) -> str:
        return canonical_json(self.to_dict(include_durations))


def run_eval(
    items: list[BenchmarkItem],
    toolbox: Toolbox,
    selection_config: SelectionConfig,
    solve_config: SolveConfig,
    llm,
    sandbox,
    templates: TemplateSet,
    *,
    parallel_width: int = 1,
) -> EvalResult:
    """Select, solve, and score every item.

    One transient infrastructure failure per item is retried; a second
    marks the item incorrect with the reason recorded, so a flaky worker
    can never abort a whole run or silently inflate accuracy.
    """
    if not items:
        raise EvalError("benchmark is empty; refusing to report accuracy over nothing")
    start = time.monotonic()
    before = llm.ledger.snapshot()

    def run_item(item: BenchmarkItem) -> tuple[ItemResult, SolveTrace | None]:
        item_start = time.monotonic()
        last_failure: str | None = None
        for _ in range(2):
            try:
                selection = select_tools(
                    item.question, toolbox, selection_config, llm, templates
                )
                tools = selected_tools(selection, toolbox)
                block = render_question_block(
                    item.question,
                    data_description=item.data_description,
                    data_files=item.data_files,
                    seed=solve_config.data_seed,
                )
                trace = solve(
                    item.id,
                    block,
                    tools,
                    solve_config,
                    llm,
                    sandbox,
                    templates,
                    selection=selection,
                    data_files=item.data_files,
                )
            except (SandboxError, TransportError) as exc:
                last_failure = f"{type(exc).__name__}: {exc}"
                continue
            duration = (time.monotonic() - item_start) * 1000.0
            return (
                ItemResult(
                    id=item.id,
                    predicted=trace.final_answer,
                    correct=score(trace.final_answer, item),
                    fallback_used=trace.fallback_used,
                    duration_ms=duration,
                ),
                trace,
            )
        duration = (time.monotonic() - item_start) * 1000.0
        return (
            ItemResult(
                id=item.id,
                predicted=None,
                correct=False,
                fallback_used=False,
                duration_ms=duration,
                infra_error=last_failure,
            ),
            None,
        )

    width = max(1, min(parallel_width, len(items)))
    if width == 1:
        outcomes = [run_item(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=width) as pool:
            outcomes = list(pool.map(run_item, items))

    results = [result for result, _ in outcomes]
    traces = [trace for _, trace in outcomes if trace is not None]
    usage = UsageLedger.diff(llm.ledger.snapshot(), before)
    manifest = {
        "n_items": len(items),
        "item_ids": [item.id for item in items],
        "selection": asdict(selection_config),
        "solve": asdict(solve_config),
        "toolbox_digest": toolbox.digest(),
        "templates_digest": templates.digest(),
        "provider": llm.config.model_name or llm.config.kind,
        "parallel_width": width,
    }
    return EvalResult(
        accuracy=sum(r.correct for r in results) / len(results),
        items=results,
        usage=usage,
        manifest=manifest,
        wall_ms=(time.monotonic() - start) * 1000.0,
        traces=traces,
    )


class _CachingLlm:
    """Reuse replies for prompts already answered once in this sweep.

    Sound at temperature zero: the same prompt gets the same reply, so a
    category-selection prompt shared between grid cells costs one call.
    """

    def __init__(self, inner):
        self._inner = inner
        self._cache: dict[tuple[str, str], object] = {}
        self._lock = threading.Lock()

    @property
    def config(self):
        return self._inner.config

    @property
    def ledger(self):
        return self._inner.ledger

    def complete(self, request):
        key = (request.purpose, request.prompt)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        response = self._inner.complete(request)
        with self._lock:
            self._cache[key] = response
        return response


@dataclass
class SweepCell:
    max_categories: int
    max_tools: int
    result: EvalResult


@dataclass
class SweepResult:
    cells: list[SweepCell]
    best: tuple[int, int]

    def table(self) -> list[dict]:
        return [
            {
                "max_categories": cell.max_categories,
                "max_tools": cell.max_tools,
                "accuracy": cell.result.accuracy,
            }
            for cell in self.cells
        ]


def sweep(
    items: list[BenchmarkItem],
    toolbox: Toolbox,
    grid: list[tuple[int, int]],
    solve_config: SolveConfig,
    llm,
    sandbox,
    templates: TemplateSet,
    *,
    base_selection: SelectionConfig | None = None,
    parallel_width: int = 1,
) -> SweepResult:
    """Evaluate every (max_categories, max_tools) grid point.

    Ties in accuracy resolve toward the smallest pair, so defaults win
    unless a bigger budget actually helps.
    """
    if not grid:
        raise EvalError("sweep grid is empty")
    base = base_selection or SelectionConfig()
    cached_llm = _CachingLlm(llm)
    cells: list[SweepCell] = []
    for max_categories, max_tools in grid:
        config = SelectionConfig(
            max_categories=max_categories,
            max_tools=max_tools,
            include_examples=base.include_examples,
        )
        result = run_eval(
            items,
            toolbox,
            config,
            solve_config,
            cached_llm,
            sandbox,
            templates,
            parallel_width=parallel_width,
        )
        cells.append(SweepCell(max_categories, max_tools, result))
    best = min(cells, key=lambda c: (-c.result.accuracy, c.max_categories, c.max_tools))
    return SweepResult(cells=cells, best=(best.max_categories, best.max_tools))


def cost_report(
    construction_usage: dict | None,
    inference_usage: dict | None,
    price_table: dict | None = None,
) -> dict:
    """Time and cost per phase; costs are None without a price table."""
    phases = []
    for name, usage in (
        ("toolbox_construction", construction_usage),
        ("inference", inference_usage),
    ):
        if usage is None:
            continue
        total = usage["total"]
        cost = None
        if price_table is not None:
            cost = (
                total["prompt_tokens"] * price_table["prompt"]
                + total["completion_tokens"] * price_table["completion"]
            )
        phases.append(
            {
                "phase": name,
                "calls": total["calls"],
                "prompt_tokens": total["prompt_tokens"],
                "completion_tokens": total["completion_tokens"],
                "time_min": total["wall_ms"] / 60000.0,
                "cost_usd": cost,
            }
        )
    return {"phases": phases, "priced": price_table is not None}


def format_cost_table(report: dict) -> str:
    header = f"{'phase':<24}{'calls':>8}{'time_min':>12}{'cost_usd':>12}"
    lines = [header, "-" * len(header)]
    for row in report["phases"]:
        cost = f"{row['cost_usd']:.4f}" if row["cost_usd"] is not None else "n/a"
        lines.append(
            f"{row['phase']:<24}{row['calls']:>8}{row['time_min']:>12.2f}{cost:>12}"
        )
    return "\n".join(lines)
