"""Command-line front end for the pipeline.

Subcommands mirror the pipeline stages: ingest, forge, inspect, select,
solve, eval, sweep. Flags beat config-file values beat defaults. Exit
codes: 0 success, 1 domain error, 2 configuration or usage error. With
``--json``, errors go to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from .errors import ConfigError, ForgeError
from .evaluation import (
    cost_report,
    format_cost_table,
    load_benchmark,
    run_eval,
    sweep,
)
from .forge import ForgeConfig, forge_toolbox
from .ingest import load_snippets, organize_snippets, parse_book
from .llm import LlmClient, ProviderConfig
from .sandbox import SandboxPool
from .selection import SelectionConfig, select_tools
from .solver import SolveConfig, render_question_block, solve
from .store import (
    load_toolbox,
    save_toolbox,
    table_of_contents,
    toolbox_stats,
)
from .templates import TemplateSet
from .util import canonical_json


def _read_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _provider_config(args, file_config: dict) -> ProviderConfig:
    provider = dict(file_config.get("provider", {}))
    if args.mock:
        return ProviderConfig(kind="mock", transcript_path=args.mock)
    for flag, key in (
        ("model", "model_name"),
        ("endpoint", "endpoint"),
        ("api_key_env", "api_key_env"),
    ):
        value = getattr(args, flag, None)
        if value:
            provider[key] = value
            provider.setdefault("kind", "http")
    if not provider:
        raise ConfigError(
            "no provider configured: pass --mock TRANSCRIPT or configure an "
            "http provider (--model/--endpoint/--api-key-env or a config file)"
        )
    return ProviderConfig(**provider)


def _templates(args, file_config: dict) -> TemplateSet:
    directory = args.template_dir or file_config.get("template_dir")
    return TemplateSet.load(directory)


def _sandbox(args, file_config: dict) -> SandboxPool:
    if getattr(args, "fake_sandbox", False):
        argv = [sys.executable, "-m", "bookforge.fake_worker"]
    elif getattr(args, "worker_cmd", None):
        argv = shlex.split(args.worker_cmd)
    elif file_config.get("worker_cmd"):
        argv = shlex.split(file_config["worker_cmd"])
    else:
        argv = [sys.executable, "-m", "sandbox_worker"]
    return SandboxPool(argv, size=max(1, args.parallel_width))


def _emit(args, payload: dict, text: str | None = None) -> None:
    if args.json or text is None:
        print(canonical_json(payload), end="")
    else:
        print(text)


def _dataclass_overrides(base, **overrides):
    values = {k: v for k, v in overrides.items() if v is not None}
    if not values:
        return base
    from dataclasses import replace

    return replace(base, **values)


def _cmd_ingest(args) -> int:
    file_config = _read_config_file(args.config)
    text = Path(args.input).read_text(encoding="utf-8")
    if args.snippets:
        snippet_set = load_snippets(text, task_label=args.task or "the task")
        client = LlmClient(_provider_config(args, file_config))
        result = organize_snippets(
            snippet_set,
            client,
            _templates(args, file_config),
            shuffle_seed=args.shuffle_seed,
            parallel_width=args.parallel_width,
        )
        book = result.book
        extra = {
            "proposed_categories": result.proposed_categories,
            "unassigned": result.unassigned,
        }
    else:
        book = parse_book(text, fmt=args.format, title=args.title)
        extra = {}
    from .ingest import book_to_dict

    payload = book_to_dict(book)
    if args.out:
        Path(args.out).write_text(canonical_json(payload), encoding="utf-8")
    summary = {
        "title": book.title,
        "chapters": len(book.chapters),
        "sections": sum(len(c.sections) for c in book.chapters),
        **extra,
    }
    _emit(
        args,
        summary,
        f"{book.title}: {summary['chapters']} chapters, {summary['sections']} sections"
        + (f" -> {args.out}" if args.out else ""),
    )
    return 0


def _cmd_forge(args) -> int:
    file_config = _read_config_file(args.config)
    book = parse_book(Path(args.book).read_text(encoding="utf-8"))
    config = _dataclass_overrides(
        ForgeConfig(**file_config.get("forge", {})),
        tools_per_section=args.tools_per_section,
        refine_rounds=args.refine_rounds,
        verify_tolerance=args.tolerance,
        parallel_width=args.parallel_width,
    )
    client = LlmClient(_provider_config(args, file_config))
    templates = _templates(args, file_config)
    with _sandbox(args, file_config) as pool:
        toolbox, report = forge_toolbox(
            book,
            config,
            client,
            pool,
            templates,
            creator_model=client.config.model_name or client.config.kind,
            created_at=args.created_at,
        )
    save_toolbox(toolbox, args.out)
    if args.report:
        Path(args.report).write_text(canonical_json(report.to_dict()), encoding="utf-8")
    totals = report.totals()
    _emit(
        args,
        {"out": args.out, "report": report.to_dict(), "usage": client.ledger.snapshot()},
        f"forged {totals['direct_pass'] + totals['refined_pass']} tools "
        f"({totals['direct_pass']} verified, {totals['refined_pass']} refined, "
        f"{totals['rejected']} rejected, {totals['parse_failures']} parse failures) "
        f"-> {args.out}",
    )
    return 0


def _cmd_inspect(args) -> int:
    toolbox = load_toolbox(args.toolbox)
    stats = toolbox_stats(toolbox)
    payload = {
        "book_title": toolbox.meta.book_title,
        "n_categories": stats.n_categories,
        "n_sections": stats.n_sections,
        "n_tools": stats.n_tools,
        "avg_function_lines": stats.avg_function_lines,
        "table_of_contents": toolbox.category_names(),
    }
    text = (
        f"{toolbox.meta.book_title}: {stats.n_categories} categories, "
        f"{stats.n_sections} sections, {stats.n_tools} tools, "
        f"{stats.avg_function_lines:.1f} avg function lines\n"
        + table_of_contents(toolbox)
    )
    _emit(args, payload, text)
    return 0


def _selection_config(args, file_config: dict) -> SelectionConfig:
    return _dataclass_overrides(
        SelectionConfig(**file_config.get("selection", {})),
        max_categories=args.max_categories,
        max_tools=args.max_tools,
    )


def _solve_config(args, file_config: dict) -> SolveConfig:
    return _dataclass_overrides(
        SolveConfig(**file_config.get("solve", {})),
        paradigm=getattr(args, "paradigm", None),
        data_seed=getattr(args, "data_seed", None),
    )


def _cmd_select(args) -> int:
    file_config = _read_config_file(args.config)
    toolbox = load_toolbox(args.toolbox)
    client = LlmClient(_provider_config(args, file_config))
    trace = select_tools(
        args.question,
        toolbox,
        _selection_config(args, file_config),
        client,
        _templates(args, file_config),
    )
    _emit(
        args,
        trace.to_dict(),
        "selected: " + (", ".join(trace.tool_ids) if trace.tool_ids else "(nothing)"),
    )
    return 0


def _cmd_solve(args) -> int:
    file_config = _read_config_file(args.config)
    toolbox = load_toolbox(args.toolbox)
    client = LlmClient(_provider_config(args, file_config))
    templates = _templates(args, file_config)
    selection_config = _selection_config(args, file_config)
    solve_config = _solve_config(args, file_config)
    from .selection import selected_tools

    with _sandbox(args, file_config) as pool:
        trace_sel = select_tools(
            args.question, toolbox, selection_config, client, templates
        )
        tools = selected_tools(trace_sel, toolbox)
        trace = solve(
            args.id,
            render_question_block(args.question, seed=solve_config.data_seed),
            tools,
            solve_config,
            client,
            pool,
            templates,
            selection=trace_sel,
        )
    _emit(
        args,
        trace.to_dict(),
        f"answer: {trace.final_answer!r}"
        + (" (no tools selected; plain paradigm)" if trace.fallback_used else ""),
    )
    return 0


def _cmd_eval(args) -> int:
    file_config = _read_config_file(args.config)
    items = load_benchmark(args.benchmark)
    toolbox = load_toolbox(args.toolbox)
    client = LlmClient(_provider_config(args, file_config))
    templates = _templates(args, file_config)
    with _sandbox(args, file_config) as pool:
        result = run_eval(
            items,
            toolbox,
            _selection_config(args, file_config),
            _solve_config(args, file_config),
            client,
            pool,
            templates,
            parallel_width=args.parallel_width,
        )
    if args.out:
        Path(args.out).write_text(result.to_json(), encoding="utf-8")
    if args.traces:
        with open(args.traces, "w", encoding="utf-8") as handle:
            for trace in result.traces:
                handle.write(json.dumps(trace.to_dict(), sort_keys=True) + "\n")
    price_table = file_config.get("price_table")
    if args.cost:
        report = cost_report(None, result.usage, price_table)
        print(format_cost_table(report), file=sys.stderr)
    _emit(
        args,
        result.to_dict(),
        f"accuracy {result.accuracy:.3f} over {len(result.items)} items"
        + (f" -> {args.out}" if args.out else ""),
    )
    return 0


def _parse_grid(text: str) -> list[tuple[int, int]]:
    try:
        cells = []
        for part in text.split(";"):
            nc, nt = part.split(",")
            cells.append((int(nc), int(nt)))
        return cells
    except ValueError as exc:
        raise ConfigError(
            f"bad grid {text!r}; expected like '1,1;1,2;2,1;2,2'"
        ) from exc


def _cmd_sweep(args) -> int:
    file_config = _read_config_file(args.config)
    items = load_benchmark(args.benchmark)
    toolbox = load_toolbox(args.toolbox)
    client = LlmClient(_provider_config(args, file_config))
    templates = _templates(args, file_config)
    with _sandbox(args, file_config) as pool:
        result = sweep(
            items,
            toolbox,
            _parse_grid(args.grid),
            _solve_config(args, file_config),
            client,
            pool,
            templates,
            parallel_width=args.parallel_width,
        )
    payload = {"cells": result.table(), "best": list(result.best)}
    if args.out:
        Path(args.out).write_text(canonical_json(payload), encoding="utf-8")
    lines = [
        f"n_c={row['max_categories']} n_t={row['max_tools']}: {row['accuracy']:.3f}"
        for row in result.table()
    ]
    _emit(
        args,
        payload,
        "\n".join(lines) + f"\nbest: n_c={result.best[0]} n_t={result.best[1]}",
    )
    return 0


def _add_provider_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mock", help="replay transcript instead of a live provider")
    parser.add_argument("--model", help="model name for the http provider")
    parser.add_argument("--endpoint", help="chat-completions endpoint URL")
    parser.add_argument(
        "--api-key-env",
        dest="api_key_env",
        help="name of the environment variable holding the API key",
    )


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--template-dir", dest="template_dir", help="override prompt templates")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument(
        "--parallel-width",
        dest="parallel_width",
        type=int,
        default=1,
        help="bounded parallelism for sections/items",
    )


def _add_sandbox_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--worker-cmd",
        dest="worker_cmd",
        help="command line for the execution worker (default: python -m sandbox_worker)",
    )
    parser.add_argument(
        "--fake-sandbox",
        dest="fake_sandbox",
        action="store_true",
        help="run code in-process with no isolation (tests and demos only)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bookforge",
        description="Build verified tool libraries from reference material "
        "and answer questions with them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a book or organize snippets into one")
    p.add_argument("input", help="book (markdown/JSON) or snippet file")
    p.add_argument("--snippets", action="store_true", help="treat input as loose snippets")
    p.add_argument("--task", help="task label for snippet organization")
    p.add_argument("--format", choices=("markdown", "json"), help="book format override")
    p.add_argument("--title", help="book title for markdown input")
    p.add_argument("--shuffle-seed", dest="shuffle_seed", type=int,
                   help="shuffle snippets before organizing (seeded)")
    p.add_argument("--out", help="write the book JSON here")
    _add_common_flags(p)
    _add_provider_flags(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("forge", help="generate, verify, and refine tools from a book")
    p.add_argument("--book", required=True, help="book JSON from ingest")
    p.add_argument("--out", required=True, help="toolbox output path")
    p.add_argument("--report", help="write per-section accounting here")
    p.add_argument("--tools-per-section", dest="tools_per_section", type=int)
    p.add_argument("--refine-rounds", dest="refine_rounds", type=int)
    p.add_argument("--tolerance", type=float, help="verification tolerance")
    p.add_argument("--created-at", dest="created_at", default="",
                   help="timestamp recorded in toolbox metadata")
    _add_common_flags(p)
    _add_provider_flags(p)
    _add_sandbox_flags(p)
    p.set_defaults(func=_cmd_forge)

    p = sub.add_parser("inspect", help="show toolbox stats and table of contents")
    p.add_argument("--toolbox", required=True)
    _add_common_flags(p)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("select", help="run hierarchical tool selection for a question")
    p.add_argument("--toolbox", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--max-categories", dest="max_categories", type=int)
    p.add_argument("--max-tools", dest="max_tools", type=int)
    _add_common_flags(p)
    _add_provider_flags(p)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("solve", help="answer one question with selected tools")
    p.add_argument("--toolbox", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--id", default="adhoc", help="question id recorded in the trace")
    p.add_argument("--paradigm", choices=("pot", "react"))
    p.add_argument("--max-categories", dest="max_categories", type=int)
    p.add_argument("--max-tools", dest="max_tools", type=int)
    p.add_argument("--data-seed", dest="data_seed", type=int)
    _add_common_flags(p)
    _add_provider_flags(p)
    _add_sandbox_flags(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("eval", help="run a benchmark end to end")
    p.add_argument("--benchmark", required=True, help="JSONL benchmark")
    p.add_argument("--toolbox", required=True)
    p.add_argument("--out", help="write the result JSON here")
    p.add_argument("--traces", help="write per-question solve traces (JSONL) here")
    p.add_argument("--cost", action="store_true", help="print a cost table to stderr")
    p.add_argument("--paradigm", choices=("pot", "react"))
    p.add_argument("--max-categories", dest="max_categories", type=int)
    p.add_argument("--max-tools", dest="max_tools", type=int)
    p.add_argument("--data-seed", dest="data_seed", type=int)
    _add_common_flags(p)
    _add_provider_flags(p)
    _add_sandbox_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="grid-search selection caps on a benchmark")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--toolbox", required=True)
    p.add_argument("--grid", default="1,1;1,2;2,1;2,2",
                   help="semicolon-separated n_c,n_t cells")
    p.add_argument("--out", help="write the sweep table here")
    p.add_argument("--paradigm", choices=("pot", "react"))
    p.add_argument("--data-seed", dest="data_seed", type=int)
    _add_common_flags(p)
    _add_provider_flags(p)
    _add_sandbox_flags(p)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ForgeError as exc:
        message = {"error": type(exc).__name__, "detail": str(exc)}
        if getattr(args, "json", False):
            print(json.dumps(message, sort_keys=True), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
