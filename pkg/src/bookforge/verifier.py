"""Tool verification: run the demo example, compare against its answer.

A draft passes when its example solution executes cleanly and the returned
value matches the expected answer under a relative tolerance. The answer
comparison here is the single implementation used everywhere a predicted
value meets a gold one, so verification and benchmark scoring cannot drift
apart.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import InfrastructureError, SandboxError
from .sandbox import ExecRequest

# Matches one leading number, optionally signed, decimal, or in e-notation.
_NUMBER = re.compile(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?")
# What may trail a number in an answer string: unit words, degree marks,
# exponents like m/s^2. A digit straight after whitespace would be a second
# number ("1 2"), which stays unparseable.
_UNIT_TAIL = re.compile(r"[A-Za-z0-9°µ/^·*\s.%()²³-]*\Z")
_SECOND_NUMBER = re.compile(r"\s*\d")

_CURRENCY = "$€£¥"


def coerce_number(value: object) -> float | None:
    """Read a float out of a scalar if there is one; None otherwise.

    Strings are parsed leniently: thousands commas and currency marks are
    stripped, a trailing percent sign divides by 100, and trailing unit
    words are ignored. Booleans are not numbers here.
    """
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        return None
    text = value.strip().replace(",", "")
    while text and text[0] in _CURRENCY:
        text = text[1:].lstrip()
    percent = text.endswith("%")
    if percent:
        text = text[:-1].rstrip()
    match = _NUMBER.match(text)
    if not match or not _UNIT_TAIL.match(text, match.end()):
        return None
    if _SECOND_NUMBER.match(text, match.end()):
        return None
    number = float(match.group())
    return number / 100.0 if percent else number


def _as_text(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value).strip().casefold()


def compare_answers(observed: object, expected: object, tolerance: float) -> bool:
    """True when observed matches expected within a gold-relative tolerance.

    Numbers (or strings that parse as numbers) compare as
    ``|observed - expected| <= tolerance * |expected|``, falling back to an
    absolute bound when the expected value is zero. Everything else
    compares as trimmed, case-insensitive text.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    observed_n = coerce_number(observed)
    expected_n = coerce_number(expected)
    if observed_n is not None and expected_n is not None:
        if observed_n == expected_n:
            return True
        if math.isnan(observed_n) or math.isnan(expected_n):
            return False
        if expected_n == 0:
            return abs(observed_n) <= tolerance
        return abs(observed_n - expected_n) <= tolerance * abs(expected_n)
    return _as_text(observed) == _as_text(expected)


@dataclass(frozen=True)
class VerificationReport:
    exec_ok: bool
    output_ok: bool
    expected: object
    observed: object
    error_kind: str | None
    traceback: str | None
    duration_ms: float

    @property
    def passed(self) -> bool:
        return self.exec_ok and self.output_ok


def verify_tool(draft, sandbox, tolerance: float, *, timeout_s: float = 60.0) -> VerificationReport:
    """Execute a draft's demo example and check its output.

    One transient sandbox failure is retried with a fresh worker; a second
    is an infrastructure error, never a silent rejection of the tool.
    """
    request = ExecRequest(
        solution_source=draft.example.solution_source,
        tool_sources=(draft.function_source,),
        timeout_s=timeout_s,
        request_id="verify",
    )
    last_error: SandboxError | None = None
    for _ in range(2):
        try:
            response = sandbox.run(request)
            break
        except SandboxError as exc:
            last_error = exc
    else:
        raise InfrastructureError(
            f"sandbox failed twice while verifying a tool: {last_error}"
        ) from last_error
    exec_ok = response.status == "ok"
    observed = response.value if exec_ok else None
    output_ok = exec_ok and compare_answers(observed, draft.example.expected_answer, tolerance)
    return VerificationReport(
        exec_ok=exec_ok,
        output_ok=output_ok,
        expected=draft.example.expected_answer,
        observed=observed,
        error_kind=response.error_kind,
        traceback=response.traceback,
        duration_ms=response.duration_ms,
    )


def render_feedback(report: VerificationReport) -> str:
    """Deterministic feedback text for the refinement prompt."""
    if report.passed:
        raise ValueError("feedback requested for a passing verification")
    if not report.exec_ok:
        lines = ["The example solution failed to execute."]
        if report.error_kind:
            lines.append(f"Error type: {report.error_kind}")
        if report.traceback:
            tail = report.traceback.strip().splitlines()
            lines.append("Traceback (last lines):")
            lines.extend(tail[-3:])
        return "\n".join(lines)
    return (
        f"The example solution executed, but returned {report.observed!r} "
        f"while the expected answer is {report.expected!r}. "
        "Please fix the function or the example so they agree."
    )
