"""Answer comparison and demo-example verification."""

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bookforge.errors import InfrastructureError, SandboxError
from bookforge.sandbox import ExecResponse
from bookforge.synthetic import capm_draft
from bookforge.verifier import (
    VerificationReport,
    coerce_number,
    compare_answers,
    render_feedback,
    verify_tool,
)

finite_floats = st.floats(allow_nan=False, allow_infinity=False)


@given(finite_floats)
def test_identity_numbers_at_zero_tolerance(x):
    assert compare_answers(x, x, 0.0)


@given(st.text(max_size=30))
def test_identity_text_at_zero_tolerance(s):
    assert compare_answers(s, s, 0.0)


def test_relative_band_at_three_percent():
    assert compare_answers(102.9, 100, 0.03)
    assert not compare_answers(103.1, 100, 0.03)
    assert compare_answers(97.1, 100, 0.03)
    assert not compare_answers(96.9, 100, 0.03)


def test_zero_expected_uses_absolute_band():
    assert compare_answers(0.02, 0, 0.03)
    assert not compare_answers(0.04, 0, 0.03)
    assert compare_answers(0.0, 0.0, 0.0)


def test_text_comparison_is_trimmed_and_caseless():
    assert compare_answers("  Helium ", "helium", 0.0)
    assert not compare_answers("helium", "neon", 0.5)


def test_numeric_strings_compare_as_numbers():
    assert compare_answers("0.109", 0.1092, 0.03)
    assert compare_answers("$1,234.50", 1234.5, 0.0)
    assert compare_answers("12%", 0.12, 0.0)
    assert compare_answers("9.8 m/s^2", 9.8, 0.0)
    assert compare_answers(42, "42", 0.0)


def test_booleans_compare_as_text_not_numbers():
    assert compare_answers(True, "true", 0.0)
    assert compare_answers(False, "FALSE", 0.0)
    assert not compare_answers(True, 1, 0.0)


def test_nan_never_matches():
    assert not compare_answers(float("nan"), 1.0, 0.5)
    assert not compare_answers(1.0, float("nan"), 0.5)


def test_negative_tolerance_rejected():
    with pytest.raises(ValueError):
        compare_answers(1, 1, -0.1)


def test_coerce_number_cases():
    assert coerce_number("1,234") == 1234.0
    assert coerce_number("€ 50") == 50.0
    assert coerce_number("3.5e-2") == 0.035
    assert coerce_number("45 %") == 0.45
    assert coerce_number("no number") is None
    assert coerce_number("1 2") is None
    assert coerce_number(True) is None
    assert coerce_number([1]) is None


def test_monotonic_in_tolerance_over_randomized_triples():
    rng = random.Random(2026)
    violations = 0
    for _ in range(1000):
        expected = rng.uniform(-1000, 1000)
        observed = expected + rng.uniform(-50, 50)
        low = rng.uniform(0, 0.5)
        high = low + rng.uniform(0, 0.5)
        if compare_answers(observed, expected, low) and not compare_answers(
            observed, expected, high
        ):
            violations += 1
    assert violations == 0


@given(finite_floats, finite_floats, st.floats(min_value=0, max_value=1), st.floats(min_value=0, max_value=1))
def test_monotonic_in_tolerance_property(observed, expected, t1, t2):
    low, high = sorted((t1, t2))
    if compare_answers(observed, expected, low):
        assert compare_answers(observed, expected, high)


# --- verify_tool -------------------------------------------------------------


def test_capm_example_verifies_within_tolerance(inproc_sandbox):
    report = verify_tool(capm_draft(), inproc_sandbox, 0.03)
    assert report.exec_ok and report.output_ok and report.passed
    assert report.observed == pytest.approx(0.1092, abs=1e-12)
    assert report.expected == 0.109


def test_exec_failure_reported_not_raised(inproc_sandbox):
    from dataclasses import replace

    draft = capm_draft()
    broken = replace(
        draft,
        example=replace(draft.example, solution_source="def solution():\n    return 1 / 0"),
    )
    report = verify_tool(broken, inproc_sandbox, 0.03)
    assert not report.exec_ok and not report.output_ok and not report.passed
    assert report.error_kind == "ZeroDivisionError"
    assert report.observed is None


def test_output_mismatch_flagged(inproc_sandbox):
    from dataclasses import replace

    draft = capm_draft()
    wrong = replace(draft, example=replace(draft.example, expected_answer=0.5))
    report = verify_tool(wrong, inproc_sandbox, 0.03)
    assert report.exec_ok and not report.output_ok


class _FlakySandbox:
    def __init__(self, failures, inner):
        self.failures = failures
        self.inner = inner
        self.calls = 0

    def run(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            raise SandboxError("synthetic transport failure")
        return self.inner.run(request)


def test_one_transient_failure_is_retried(inproc_sandbox):
    flaky = _FlakySandbox(failures=1, inner=inproc_sandbox)
    report = verify_tool(capm_draft(), flaky, 0.03)
    assert report.passed
    assert flaky.calls == 2


def test_persistent_failure_is_infrastructure_error(inproc_sandbox):
    flaky = _FlakySandbox(failures=10, inner=inproc_sandbox)
    with pytest.raises(InfrastructureError):
        verify_tool(capm_draft(), flaky, 0.03)
    assert flaky.calls == 2


# --- feedback rendering --------------------------------------------------------


def test_feedback_for_exec_failure_names_error_and_traceback():
    report = VerificationReport(
        exec_ok=False,
        output_ok=False,
        expected=5,
        observed=None,
        error_kind="ValueError",
        traceback="Traceback ...\nValueError: bad input",
        duration_ms=1.0,
    )
    text = render_feedback(report)
    assert "failed to execute" in text
    assert "ValueError" in text
    assert "bad input" in text


def test_feedback_for_mismatch_names_both_values():
    report = VerificationReport(
        exec_ok=True,
        output_ok=False,
        expected=18,
        observed=9,
        error_kind=None,
        traceback=None,
        duration_ms=1.0,
    )
    text = render_feedback(report)
    assert "9" in text and "18" in text
    assert render_feedback(report) == text  # deterministic


def test_feedback_refused_for_passing_report():
    report = VerificationReport(
        exec_ok=True, output_ok=True, expected=1, observed=1,
        error_kind=None, traceback=None, duration_ms=1.0,
    )
    with pytest.raises(ValueError):
        render_feedback(report)
