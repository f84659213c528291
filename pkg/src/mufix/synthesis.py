"""Candidate generation: prompts, code extraction, and test generation.

Model responses mix prose with code. Extraction prefers a fenced block
that defines the entry point, then any fenced block, then the bare
response when it parses as a definition of the entry point after trimming
surrounding chatter. Extraction is idempotent on already-clean code.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

from .backend import ScopedChat
from .corpus import GENERATED, TestCase, parse_assertion_line
from .errors import NoCodeFound, NoTestsGenerated
from .templates import TemplateSet, user_message

PHASE_THOUGHT = "thought"
PHASE_FEEDBACK = "feedback"


@dataclass(frozen=True)
class CandidateProgram:
    code: str
    phase: str = PHASE_THOUGHT
    iteration: int = 0
    trace_ids: tuple[str, ...] = field(default_factory=tuple)


_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)
_CODE_START = re.compile(r"^\s*(def |class |import |from |@|#)")


def _defines(code: str, entry_point: str) -> bool:
    return re.search(rf"\bdef\s+{re.escape(entry_point)}\s*\(", code) is not None


def _trim_to_code(text: str) -> str | None:
    """Drop leading prose and trailing junk until the remainder parses."""
    lines = text.splitlines()
    start = next((i for i, line in enumerate(lines) if _CODE_START.match(line)), None)
    if start is None:
        return None
    for end in range(len(lines), start, -1):
        chunk = "\n".join(lines[start:end]).rstrip()
        if not chunk:
            continue
        try:
            ast.parse(chunk)
        except SyntaxError:
            continue
        return chunk
    return None


def extract_code(text: str, entry_point: str) -> str | None:
    """Best code block for entry_point, or None when nothing usable exists."""
    blocks = [m.group(2) for m in _FENCE.finditer(text)]
    for block in blocks:
        if _defines(block, entry_point):
            return block.strip("\n")
    if blocks:
        return blocks[0].strip("\n")
    if _defines(text, entry_point):
        return _trim_to_code(text)
    return None


def generate_candidate(
    chat: ScopedChat,
    templates: TemplateSet,
    spec_text: str,
    entry_point: str,
    understanding_text: str | None,
    params: dict | None = None,
    phase: str = PHASE_THOUGHT,
    iteration: int = 0,
) -> CandidateProgram:
    """One codegen chat call; raises NoCodeFound when no code comes back."""
    if understanding_text is None:
        prompt = templates.render("codegen_zero_shot", spec=spec_text)
    else:
        prompt = templates.render("codegen", spec=spec_text, understanding=understanding_text)
    response = chat.chat(user_message(prompt), kind="codegen", params=params)
    code = extract_code(response.content, entry_point)
    if code is None:
        raise NoCodeFound(f"no code block or {entry_point} definition in response")
    return CandidateProgram(
        code=code, phase=phase, iteration=iteration, trace_ids=(chat.last_trace_id,)
    )


def generate_tests(
    chat: ScopedChat,
    templates: TemplateSet,
    spec_text: str,
    entry_point: str,
    count: int,
    params: dict | None = None,
) -> tuple[TestCase, ...]:
    """Ask the model for assert-style tests; parse what it returns.

    Unparseable lines are skipped; keeps at most count cases. Raises
    NoTestsGenerated when not a single line parses.
    """
    prompt = templates.render(
        "gen_tests", spec=spec_text, count=str(count), entry_point=entry_point
    )
    response = chat.chat(user_message(prompt), kind="gen_tests", params=params)
    cases = []
    for line in response.content.splitlines():
        case = parse_assertion_line(line, entry_point)
        if case is not None:
            cases.append(
                TestCase(
                    call_expr=case.call_expr,
                    expected_literal=case.expected_literal,
                    provenance=GENERATED,
                )
            )
        if len(cases) == count:
            break
    if not cases:
        raise NoTestsGenerated(f"no parseable assert lines for {entry_point}")
    return tuple(cases)
