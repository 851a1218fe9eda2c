"""Solution paradigms: single-turn program-of-thoughts and multi-turn ReAct.

Both paradigms ask for a ``def solution()`` function, run it in the sandbox,
and treat its return value as the answer. With selected tools the prompt
carries the tool listing; with an empty selection it degrades to exactly
the plain program-of-thoughts prompt, byte for byte.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CodeExtractionError
from .llm import LlmRequest
from .sandbox import ExecRequest
from .selection import SelectionTrace, render_tool_listing
from .store import Tool
from .templates import TemplateSet
from .util import prompt_digest

_OPEN_FENCE = re.compile(r"```[^\n`]*\n")
_DEF_SOLUTION = re.compile(r"^def\s+solution\s*\(", re.MULTILINE)
_FINAL_ANSWER = re.compile(r"^\s*FINAL ANSWER:\s*(.+?)\s*$", re.MULTILINE)

PARADIGMS = ("pot", "react")

# Data previews show the header plus this many shuffled rows.
DATA_PREVIEW_ROWS = 10


@dataclass(frozen=True)
class SolveConfig:
    paradigm: str = "pot"
    include_examples: bool = True
    max_turns: int = 5
    exec_timeout_s: float = 120.0
    observation_limit: int = 2000
    data_seed: int = 0

    def __post_init__(self):
        if self.paradigm not in PARADIGMS:
            raise ValueError(f"unknown paradigm: {self.paradigm!r}")
        if self.max_turns < 1:
            raise ValueError("max_turns must be at least 1")
        if self.observation_limit < 1:
            raise ValueError("observation_limit must be positive")


@dataclass
class Turn:
    prompt: str
    prompt_digest: str
    reply: str
    code: str | None = None
    exec_status: str | None = None
    exec_value: object = None
    observation: str | None = None


@dataclass
class SolveTrace:
    question_id: str
    paradigm: str
    fallback_used: bool
    turns: list[Turn] = field(default_factory=list)
    final_answer: object = None
    prompt_tokens: int = 0
    completion_tokens: int = 0
    selection: SelectionTrace | None = None

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "paradigm": self.paradigm,
            "fallback_used": self.fallback_used,
            "final_answer": self.final_answer,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "selection": self.selection.to_dict() if self.selection else None,
            "turns": [
                {
                    "prompt_digest": t.prompt_digest,
                    "prompt": t.prompt,
                    "reply": t.reply,
                    "code": t.code,
                    "exec_status": t.exec_status,
                    "exec_value": t.exec_value,
                    "observation": t.observation,
                }
                for t in self.turns
            ],
        }


def extract_code_block(text: str) -> str:
    """Code from the first triple-backtick block, language tag ignored.

    An unclosed fence runs to the end of the text. With no fence at all, a
    bare reply that itself defines ``solution`` is accepted verbatim.
    """
    match = _OPEN_FENCE.search(text)
    if match:
        rest = text[match.end():]
        closing = rest.find("```")
        return rest[:closing] if closing != -1 else rest
    if _DEF_SOLUTION.search(text):
        return text
    raise CodeExtractionError("no code block in solution reply", raw=text[-200:])


def render_question_block(question: str, *, data_description: str | None = None,
                          data_files: tuple[str, ...] = (), seed: int = 0) -> str:
    """The question plus any data context, as pasted into prompts.

    Each data file contributes its header line and a seeded shuffle of ten
    data rows, so prompts never depend on row order in the file but stay
    reproducible for a given seed.
    """
    parts = [question]
    if data_description:
        parts.append("Data description:\n" + data_description.strip())
    for path in data_files:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            continue
        header, rows = lines[0], lines[1:]
        rng = random.Random(f"{seed}:{Path(path).name}")
        rng.shuffle(rows)
        preview = [header] + rows[:DATA_PREVIEW_ROWS]
        parts.append(
            f"First lines of {Path(path).name} (rows shuffled):\n" + "\n".join(preview)
        )
    return "\n\n".join(parts)


def build_solution_prompt(
    question_block: str,
    tools: list[Tool],
    config: SolveConfig,
    templates: TemplateSet,
) -> str:
    """Single-turn prompt; exactly the plain paradigm when no tools given."""
    if not tools:
        return templates.render("pot", question=question_block)
    return templates.render(
        "solution_with_tools",
        question=question_block,
        tools=render_tool_listing(tools, templates, config.include_examples),
    )


def _first_react_prompt(
    question_block: str, tools: list[Tool], config: SolveConfig, templates: TemplateSet
) -> str:
    if not tools:
        return templates.render("react", question=question_block)
    return templates.render(
        "react_with_tools",
        question=question_block,
        tools=render_tool_listing(tools, templates, config.include_examples),
    )


def _coerce_final(text: str) -> object:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        return text


def _run_code(code: str, tools: list[Tool], config: SolveConfig, sandbox,
              question_id: str, workdir: str | None):
    request = ExecRequest(
        solution_source=code,
        tool_sources=tuple(tool.function_source for tool in tools),
        timeout_s=config.exec_timeout_s,
        workdir=workdir,
        request_id=f"solve-{question_id}",
    )
    return sandbox.run(request)


def _workdir_for(data_files: tuple[str, ...]) -> str | None:
    return str(Path(data_files[0]).parent) if data_files else None


def solve_pot(
    question_id: str,
    question_block: str,
    tools: list[Tool],
    config: SolveConfig,
    llm,
    sandbox,
    templates: TemplateSet,
    *,
    selection: SelectionTrace | None = None,
    data_files: tuple[str, ...] = (),
) -> SolveTrace:
    """One prompt, one reply, one execution; the return value is the answer."""
    trace = SolveTrace(
        question_id=question_id,
        paradigm="pot",
        fallback_used=not tools,
        selection=selection,
    )
    prompt = build_solution_prompt(question_block, tools, config, templates)
    reply = llm.complete(LlmRequest(prompt=prompt, purpose="solution"))
    trace.prompt_tokens += reply.prompt_tokens
    trace.completion_tokens += reply.completion_tokens
    turn = Turn(
        prompt=prompt,
        prompt_digest=prompt_digest("solution", prompt),
        reply=reply.text,
    )
    trace.turns.append(turn)
    try:
        turn.code = extract_code_block(reply.text)
    except CodeExtractionError:
        return trace
    response = _run_code(
        turn.code, tools, config, sandbox, question_id, _workdir_for(data_files)
    )
    turn.exec_status = response.status
    turn.exec_value = response.value
    if response.ok:
        trace.final_answer = response.value
    return trace


def _render_observation(response, limit: int) -> str:
    if response.ok:
        text = f"The code returned: {response.value!r}"
        if response.stdout.strip():
            text += "\nIt printed:\n" + response.stdout.strip()
    elif response.status == "timeout":
        text = "The code timed out before returning."
    else:
        text = f"The code raised {response.error_kind}."
        if response.traceback:
            text += "\n" + response.traceback.strip()
    return text[:limit]


def solve_react(
    question_id: str,
    question_block: str,
    tools: list[Tool],
    config: SolveConfig,
    llm,
    sandbox,
    templates: TemplateSet,
    *,
    selection: SelectionTrace | None = None,
    data_files: tuple[str, ...] = (),
) -> SolveTrace:
    """Up to max_turns of code-and-observe, ended by a FINAL ANSWER line.

    Without a sentinel, the answer is the value of the last successful
    execution, if any. Each turn resends the whole growing conversation.
    """
    trace = SolveTrace(
        question_id=question_id,
        paradigm="react",
        fallback_used=not tools,
        selection=selection,
    )
    conversation = _first_react_prompt(question_block, tools, config, templates)
    workdir = _workdir_for(data_files)
    last_ok: object = None
    saw_ok = False
    for _ in range(config.max_turns):
        reply = llm.complete(LlmRequest(prompt=conversation, purpose="solution"))
        trace.prompt_tokens += reply.prompt_tokens
        trace.completion_tokens += reply.completion_tokens
        turn = Turn(
            prompt=conversation,
            prompt_digest=prompt_digest("solution", conversation),
            reply=reply.text,
        )
        trace.turns.append(turn)
        sentinel = _FINAL_ANSWER.search(reply.text)
        if sentinel:
            trace.final_answer = _coerce_final(sentinel.group(1))
            return trace
        try:
            turn.code = extract_code_block(reply.text)
        except CodeExtractionError:
            observation = "No python code block and no FINAL ANSWER line found."
        else:
            response = _run_code(
                turn.code, tools, config, sandbox, question_id, workdir
            )
            turn.exec_status = response.status
            turn.exec_value = response.value
            if response.ok:
                last_ok = response.value
                saw_ok = True
            observation = _render_observation(response, config.observation_limit)
        turn.observation = observation
        conversation = (
            conversation
            + "\n\n"
            + reply.text
            + "\n\n"
            + templates.render("react_observation", observation=observation)
        )
    if saw_ok:
        trace.final_answer = last_ok
    return trace


def solve(
    question_id: str,
    question_block: str,
    tools: list[Tool],
    config: SolveConfig,
    llm,
    sandbox,
    templates: TemplateSet,
    *,
    selection: SelectionTrace | None = None,
    data_files: tuple[str, ...] = (),
) -> SolveTrace:
    runner = solve_pot if config.paradigm == "pot" else solve_react
    return runner(
        question_id,
        question_block,
        tools,
        config,
        llm,
        sandbox,
        templates,
        selection=selection,
        data_files=data_files,
    )
