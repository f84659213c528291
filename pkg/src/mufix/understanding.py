"""Specification understanding: generation, masking, checking, refinement.

An understanding is an analysis of the specification plus one block per
driving test (call, reasoning, expected output). Its quality is checked by
masking every expected output with "<?>", asking the model to re-infer them
from the reasoning alone, and comparing the inferred literals against the
originals. A mismatch triggers refinement, at most n_refinements times.

Call budget per obtained understanding: 1 generation, one check per
revision plus one (a zeroth check always runs), and one refinement per
revision. With r revisions used that is 1 + (r + 1) + r calls, r bounded
by n_refinements.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .backend import ScopedChat
from .corpus import TestCase
from .errors import MalformedUnderstanding, NoEmbeddedTests
from .literals import match_literal_texts
from .templates import TemplateSet, user_message

MASK = "<?>"

STATUS_UNCHECKED = "unchecked"
STATUS_PASSED = "passed"
STATUS_FAILED = "failed"


@dataclass(frozen=True)
class TestBlock:
    call_expr: str
    reasoning: str
    expected: str


@dataclass(frozen=True)
class Understanding:
    analysis_text: str
    test_blocks: tuple[TestBlock, ...]
    revision: int = 0
    status: str = STATUS_UNCHECKED


@dataclass(frozen=True)
class MaskedUnderstanding:
    """An understanding with expected outputs masked, plus the originals.

    unmask(mask(u)) == u holds for any understanding.
    """

    base: Understanding
    originals: tuple[str, ...]


@dataclass(frozen=True)
class TestCheck:
    inferred_literal: str
    expected_literal: str
    matched: bool


@dataclass(frozen=True)
class CheckResult:
    per_test: tuple[TestCheck, ...]
    overall: bool


def render_understanding(u: Understanding) -> str:
    """Canonical text form used in every prompt that embeds an understanding."""
    parts = [f"### Analysis\n{u.analysis_text}"]
    for i, block in enumerate(u.test_blocks, 1):
        parts.append(
            f"### Test {i}\n"
            f"Call: {block.call_expr}\n"
            f"Reasoning: {block.reasoning}\n"
            f"Expected output: {block.expected}"
        )
    return "\n\n".join(parts)


def initial_skeleton(tests: tuple[TestCase, ...]) -> str:
    """Fill-in structure for the first prompt: one mask per test's reasoning."""
    parts = ["### Analysis\n[your understanding of the specification]"]
    for i, test in enumerate(tests, 1):
        parts.append(
            f"### Test {i}\n"
            f"Call: {test.call_expr}\n"
            f"Reasoning: {MASK}\n"
            f"Expected output: {test.expected_literal}"
        )
    return "\n\n".join(parts)


_HEADING = re.compile(r"^###\s*(Analysis|Test\s+(\d+))\s*$", re.IGNORECASE | re.MULTILINE)
_FIELDS = ("call", "reasoning", "expected output")


def _split_fields(block_text: str) -> dict[str, str]:
    """Split a test block into labeled fields; values may span lines."""
    fields: dict[str, str] = {}
    current: str | None = None
    buf: list[str] = []
    for line in block_text.splitlines():
        lowered = line.strip().lower()
        matched = next((f for f in _FIELDS if lowered.startswith(f + ":")), None)
        if matched:
            if current:
                fields[current] = "\n".join(buf).strip()
            current = matched
            buf = [line.strip()[len(matched) + 1 :].strip()]
        elif current:
            buf.append(line)
    if current:
        fields[current] = "\n".join(buf).strip()
    return fields


def parse_understanding(text: str, expected_count: int, revision: int = 0) -> Understanding:
    """Parse model output into an Understanding with exactly expected_count blocks.

    Blocks are matched by their Test labels and reordered into label order;
    a missing or duplicated label, a count mismatch, or a block without all
    three fields is MalformedUnderstanding.
    """
    headings = list(_HEADING.finditer(text))
    if not headings:
        raise MalformedUnderstanding("no ### Analysis / ### Test sections found")
    analysis = ""
    blocks: dict[int, TestBlock] = {}
    for i, head in enumerate(headings):
        start = head.end()
        end = headings[i + 1].start() if i + 1 < len(headings) else len(text)
        body = text[start:end].strip()
        if head.group(2) is None:
            analysis = body
            continue
        label = int(head.group(2))
        if label in blocks:
            raise MalformedUnderstanding(f"duplicate Test {label} block")
        fields = _split_fields(body)
        missing = [f for f in _FIELDS if f not in fields]
        if missing:
            raise MalformedUnderstanding(f"Test {label}: missing fields {missing}")
        blocks[label] = TestBlock(
            call_expr=fields["call"],
            reasoning=fields["reasoning"],
            expected=fields["expected output"],
        )
    if sorted(blocks) != list(range(1, expected_count + 1)):
        raise MalformedUnderstanding(
            f"expected Test blocks 1..{expected_count}, got labels {sorted(blocks)}"
        )
    ordered = tuple(blocks[k] for k in range(1, expected_count + 1))
    return Understanding(analysis_text=analysis, test_blocks=ordered, revision=revision)


def mask(u: Understanding) -> MaskedUnderstanding:
    """Replace each block's expected output with the mask token."""
    masked_blocks = tuple(replace(b, expected=MASK) for b in u.test_blocks)
    return MaskedUnderstanding(
        base=replace(u, test_blocks=masked_blocks),
        originals=tuple(b.expected for b in u.test_blocks),
    )


def unmask(m: MaskedUnderstanding) -> Understanding:
    """Restore the original expected outputs; inverse of mask()."""
    restored = tuple(
        replace(b, expected=original)
        for b, original in zip(m.base.test_blocks, m.originals)
    )
    return replace(m.base, test_blocks=restored)


_CHECK_LINE = re.compile(r"^\s*Test\s+(\d+)\s*:\s*(.*?)\s*$", re.IGNORECASE)


def parse_check_response(text: str, count: int) -> tuple[str, ...]:
    """Extract 'Test k: <literal>' lines; requires each label 1..count once."""
    found: dict[int, str] = {}
    for line in text.splitlines():
        m = _CHECK_LINE.match(line)
        if not m:
            continue
        label = int(m.group(1))
        if label in found:
            raise MalformedUnderstanding(f"duplicate inferred output for Test {label}")
        found[label] = m.group(2)
    if sorted(found) != list(range(1, count + 1)):
        raise MalformedUnderstanding(
            f"expected inferred outputs for Tests 1..{count}, got labels {sorted(found)}"
        )
    return tuple(found[k] for k in range(1, count + 1))


def compare_inferred(inferred: tuple[str, ...], originals: tuple[str, ...]) -> CheckResult:
    per_test = tuple(
        TestCheck(
            inferred_literal=inf,
            expected_literal=orig,
            matched=match_literal_texts(inf, orig),
        )
        for inf, orig in zip(inferred, originals)
    )
    return CheckResult(per_test=per_test, overall=all(t.matched for t in per_test))


def run_check(
    chat: ScopedChat,
    templates: TemplateSet,
    spec_text: str,
    masked: MaskedUnderstanding,
) -> CheckResult:
    """One chat call: infer the masked outputs, then compare to originals."""
    prompt = templates.render(
        "check", spec=spec_text, understanding=render_understanding(masked.base)
    )
    response = chat.chat(user_message(prompt), kind="check", params={"temperature": 0.0})
    try:
        inferred = parse_check_response(response.content, len(masked.originals))
    except MalformedUnderstanding:
        # An unreadable inference counts as a failed check, not a crash.
        per_test = tuple(
            TestCheck(inferred_literal="", expected_literal=orig, matched=False)
            for orig in masked.originals
        )
        return CheckResult(per_test=per_test, overall=False)
    return compare_inferred(inferred, masked.originals)


def _mismatch_text(check: CheckResult, u: Understanding) -> str:
    parts = []
    for i, (t, block) in enumerate(zip(check.per_test, u.test_blocks), 1):
        if t.matched:
            continue
        parts.append(
            f"Test {i}:\n"
            f"Call: {block.call_expr}\n"
            f"Provided output: {t.expected_literal}\n"
            f"Inferred output: {t.inferred_literal}"
        )
    return "\n\n".join(parts) if parts else "(none)"


def obtain_understanding(
    chat: ScopedChat,
    templates: TemplateSet,
    spec_text: str,
    tests: tuple[TestCase, ...],
    n_refinements: int,
    params: dict | None = None,
) -> tuple[Understanding, list[CheckResult]]:
    """Generate, check, and refine an understanding of a specification.

    Returns the final understanding (status passed or failed) and the check
    history. Even with n_refinements == 0 one check runs. Malformed model
    output degrades (fallback understanding, failed status); it never raises.
    """
    if not tests:
        raise NoEmbeddedTests("understanding phase needs at least one driving test")

    prompt = templates.render("initial", spec=spec_text, tests=initial_skeleton(tests))
    response = chat.chat(user_message(prompt), kind="understand", params=params)
    try:
        current = parse_understanding(response.content, len(tests))
    except MalformedUnderstanding:
        fallback = Understanding(
            analysis_text=response.content, test_blocks=(), status=STATUS_FAILED
        )
        return fallback, [CheckResult(per_test=(), overall=False)]

    history: list[CheckResult] = []
    for attempt in range(n_refinements + 1):
        masked = mask(current)
        check = run_check(chat, templates, spec_text, masked)
        history.append(check)
        if check.overall:
            return replace(current, status=STATUS_PASSED), history
        if attempt == n_refinements:
            return replace(current, status=STATUS_FAILED), history
        refine_prompt = templates.render(
            "refine",
            spec=spec_text,
            understanding=render_understanding(current),
            mismatches=_mismatch_text(check, current),
        )
        refine_response = chat.chat(user_message(refine_prompt), kind="refine", params=params)
        try:
            current = parse_understanding(
                refine_response.content, len(tests), revision=current.revision + 1
            )
        except MalformedUnderstanding:
            # A revision that cannot be parsed cannot be checked; keep the
            # best structured understanding and stop early.
            return replace(current, status=STATUS_FAILED), history
    raise AssertionError("unreachable")
