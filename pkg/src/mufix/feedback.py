"""Execution-feedback adjustment of a failing candidate.

When the candidate fails its driving tests, each adjustment iteration makes
exactly three chat calls: summarize the code's actual behavior into the
understanding format, reconcile that summary with the provided
understanding into a corrected one, and regenerate code from it. The loop
runs at most m_adjustments times and stops early once the driving tests
pass. It never runs at all when they already pass or when m is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

from .backend import ScopedChat
from .corpus import TestCase
from .errors import MalformedUnderstanding, NoCodeFound
from .sandbox import ExecLimits, ExecutionReport, VERDICT_PASS
from .synthesis import PHASE_FEEDBACK, CandidateProgram, generate_candidate
from .templates import TemplateSet, user_message
from .understanding import (
    STATUS_FAILED,
    Understanding,
    parse_understanding,
    render_understanding,
)


@dataclass(frozen=True)
class FeedbackOutcome:
    candidate: CandidateProgram
    report: ExecutionReport
    understanding: Understanding
    iterations: int


def summarize_code(
    chat: ScopedChat,
    templates: TemplateSet,
    spec_text: str,
    code: str,
    tests: tuple[TestCase, ...],
) -> str:
    """One chat call describing what the code actually does, as text.

    A well-formed response is re-rendered canonically; anything else is
    used verbatim so the adjustment prompt still sees the model's words.
    """
    listed = "\n".join(f"Test {i}: {t.call_expr}" for i, t in enumerate(tests, 1))
    prompt = templates.render("summarize", spec=spec_text, code=code, tests=listed)
    response = chat.chat(user_message(prompt), kind="summarize", params={"temperature": 0.0})
    try:
        parsed = parse_understanding(response.content, len(tests))
        return render_understanding(parsed)
    except MalformedUnderstanding:
        return response.content


def execution_mismatches(report: ExecutionReport, tests: tuple[TestCase, ...]) -> str:
    """Render failing verdicts with their expected-vs-actual messages."""
    parts = []
    for verdict, test in zip(report.verdicts, tests):
        if verdict.verdict == VERDICT_PASS:
            continue
        parts.append(
            f"Test {verdict.index + 1}:\n"
            f"Call: {test.call_expr}\n"
            f"Expected output: {test.expected_literal}\n"
            f"Result: {verdict.verdict}"
            + (f" ({verdict.message})" if verdict.message else "")
        )
    return "\n\n".join(parts) if parts else "(all tests passed)"


def adjust_understanding(
    chat: ScopedChat,
    templates: TemplateSet,
    spec_text: str,
    code: str,
    mismatches: str,
    provided: Understanding,
    summary: str,
    expected_count: int,
    params: dict | None = None,
) -> Understanding:
    """One chat call reconciling provided and summarized understanding.

    The adjusted understanding bumps the revision and is not re-checked; a
    malformed response degrades to an unstructured failed understanding.
    """
    prompt = templates.render(
        "adjust",
        spec=spec_text,
        code=code,
        mismatches=mismatches,
        understanding=render_understanding(provided),
        summary=summary,
    )
    response = chat.chat(user_message(prompt), kind="adjust", params=params)
    try:
        return parse_understanding(
            response.content, expected_count, revision=provided.revision + 1
        )
    except MalformedUnderstanding:
        return Understanding(
            analysis_text=response.content,
            test_blocks=(),
            revision=provided.revision + 1,
            status=STATUS_FAILED,
        )


def feedback_loop(
    chat: ScopedChat,
    templates: TemplateSet,
    executor,
    spec_text: str,
    entry_point: str,
    tests: tuple[TestCase, ...],
    understanding: Understanding,
    candidate: CandidateProgram,
    report: ExecutionReport,
    m_adjustments: int,
    limits: ExecLimits,
    params: dict | None = None,
) -> FeedbackOutcome:
    """Adjust understanding and regenerate while driving tests fail.

    Exactly 3 chat calls per iteration, at most 3 * m_adjustments total.
    """
    if m_adjustments <= 0 or report.all_passed:
        return FeedbackOutcome(candidate, report, understanding, iterations=0)

    current_candidate = candidate
    current_report = report
    current_understanding = understanding
    iterations = 0
    for _ in range(m_adjustments):
        iterations += 1
        summary = summarize_code(chat, templates, spec_text, current_candidate.code, tests)
        mismatches = execution_mismatches(current_report, tests)
        current_understanding = adjust_understanding(
            chat,
            templates,
            spec_text,
            current_candidate.code,
            mismatches,
            current_understanding,
            summary,
            expected_count=len(tests),
            params=params,
        )
        try:
            current_candidate = generate_candidate(
                chat,
                templates,
                spec_text,
                entry_point,
                render_understanding(current_understanding),
                params=params,
                phase=PHASE_FEEDBACK,
                iteration=iterations,
            )
        except NoCodeFound:
            # Keep the previous candidate; the iteration still counts.
            continue
        current_report = executor.run_tests(current_candidate.code, entry_point, tests, limits)
        if current_report.all_passed:
            break
    return FeedbackOutcome(current_candidate, current_report, current_understanding, iterations)
