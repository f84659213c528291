"""Benchmark records, embedded-test extraction, and evaluation suites.

A problem arrives as a natural-language specification (the function prompt),
an entry point name, and a held-out evaluation suite. Tests embedded in the
specification come in exactly two recognized shapes:

  * interpreter-session style: a ``>>>`` line calling the entry point,
    followed by output lines up to a blank line or the next marker, with
    ``...`` continuations while brackets are unbalanced;
  * assertion style: ``assert entry_point(...) == literal`` on one line.

Anything else is skipped silently; extraction never fails a load.
"""

from __future__ import annotations

import ast
import json
import os
from dataclasses import dataclass, field

from .errors import FormatError, IoError

EMBEDDED = "embedded"
GENERATED = "generated"


@dataclass(frozen=True)
class TestCase:
    """A single call with its expected output, both as source text."""

    call_expr: str
    expected_literal: str
    provenance: str = EMBEDDED


@dataclass(frozen=True)
class EvaluationSuite:
    """Held-out assertions used only for final scoring, never for repair."""

    assertions: tuple[str, ...]

    @property
    def count(self) -> int:
        return len(self.assertions)


@dataclass(frozen=True)
class ProblemSpec:
    task_id: str
    prompt: str
    entry_point: str
    eval_suite: EvaluationSuite
    embedded_tests: tuple[TestCase, ...] = field(default_factory=tuple)
    canonical_solution: str | None = None


def _balanced(text: str) -> bool:
    depth = 0
    for ch in text:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
    return depth <= 0


def _calls_entry_point(expr_text: str, entry_point: str) -> bool:
    try:
        tree = ast.parse(expr_text.strip(), mode="eval")
    except SyntaxError:
        return False
    for node in ast.walk(tree):
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            if node.func.id == entry_point:
                return True
    return False


def _session_case(lines: list[str], start: int, entry_point: str):
    """Parse one ``>>>`` example starting at lines[start].

    Returns (TestCase or None, next line index). None means the example was
    not a usable call/output pair; scanning resumes after it either way.
    """
    code = lines[start].strip()[4:] if lines[start].strip().startswith(">>> ") else lines[start].strip()[3:]
    i = start + 1
    while not _balanced(code) and i < len(lines) and lines[i].strip().startswith("..."):
        cont = lines[i].strip()[3:].strip()
        code += cont if cont.startswith((")", "]", "}")) else " " + cont
        i += 1
    out_lines: list[str] = []
    while i < len(lines):
        stripped = lines[i].strip()
        # Blank line, the next example, or a docstring fence ends the output.
        if not stripped or stripped.startswith(">>>") or stripped.startswith(('"""', "'''")):
            break
        out_lines.append(stripped)
        i += 1
    if not out_lines or not _calls_entry_point(code, entry_point):
        return None, i
    return TestCase(call_expr=code.strip(), expected_literal="\n".join(out_lines)), i


def parse_assertion_line(line: str, entry_point: str):
    stripped = line.strip()
    if not stripped.startswith("assert"):
        return None
    try:
        tree = ast.parse(stripped)
    except SyntaxError:
        return None
    if len(tree.body) != 1 or not isinstance(tree.body[0], ast.Assert):
        return None
    test = tree.body[0].test
    if not (isinstance(test, ast.Compare) and len(test.ops) == 1 and isinstance(test.ops[0], ast.Eq)):
        return None
    left, right = test.left, test.comparators[0]
    if not (isinstance(left, ast.Call) and isinstance(left.func, ast.Name) and left.func.id == entry_point):
        return None
    call_src = ast.get_source_segment(stripped, left)
    expected_src = ast.get_source_segment(stripped, right)
    if call_src is None or expected_src is None:
        return None
    return TestCase(call_expr=call_src, expected_literal=expected_src)


def extract_embedded_tests(spec_text: str, entry_point: str) -> tuple[TestCase, ...]:
    """Pull recognizable example tests out of a specification, in order."""
    lines = spec_text.splitlines()
    cases: list[TestCase] = []
    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if stripped.startswith(">>>"):
            case, i = _session_case(lines, i, entry_point)
            if case is not None:
                cases.append(case)
            continue
        case = parse_assertion_line(lines[i], entry_point)
        if case is not None:
            cases.append(case)
        i += 1
    return tuple(cases)


def limit_tests(tests: tuple[TestCase, ...], limit: int | None) -> tuple[TestCase, ...]:
    """Keep the first ``limit`` tests; None keeps all. Fewer than asked is fine."""
    if limit is None:
        return tuple(tests)
    return tuple(tests[:limit])


class _RenameCandidate(ast.NodeTransformer):
    def __init__(self, entry_point: str):
        self.entry_point = entry_point

    def visit_Name(self, node: ast.Name):
        if node.id == "candidate":
            return ast.copy_location(ast.Name(id=self.entry_point, ctx=node.ctx), node)
        return node


def _suite_from_check(test_source: str, entry_point: str) -> EvaluationSuite:
    """Split ``def check(candidate)`` into standalone assertions when safe.

    Safe means the body holds only asserts, imports, and plain assignments
    (plus a docstring). Each assertion string carries the setup statements
    that precede it, with ``candidate`` renamed to the entry point. Any
    other statement shape keeps the suite whole as a single assertion.
    """
    try:
        tree = ast.parse(test_source)
    except SyntaxError:
        raise FormatError("evaluation suite source does not parse")
    check = next(
        (n for n in tree.body if isinstance(n, ast.FunctionDef) and n.name == "check"),
        None,
    )
    if check is None:
        return EvaluationSuite(assertions=(test_source,))

    rename = _RenameCandidate(entry_point)
    setup: list[str] = []
    assertions: list[str] = []
    body = check.body
    if body and isinstance(body[0], ast.Expr) and isinstance(body[0].value, ast.Constant):
        body = body[1:]
    for stmt in body:
        if isinstance(stmt, (ast.Import, ast.ImportFrom, ast.Assign, ast.AnnAssign)):
            setup.append(ast.unparse(rename.visit(stmt)))
        elif isinstance(stmt, ast.Assert):
            text = ast.unparse(rename.visit(stmt))
            assertions.append("\n".join(setup + [text]))
        else:
            whole = test_source.rstrip() + f"\n\ncheck({entry_point})\n"
            return EvaluationSuite(assertions=(whole,))
    if not assertions:
        whole = test_source.rstrip() + f"\n\ncheck({entry_point})\n"
        return EvaluationSuite(assertions=(whole,))
    return EvaluationSuite(assertions=tuple(assertions))


def _read_jsonl(path: str) -> list[dict]:
    if not os.path.isfile(path):
        raise IoError(f"benchmark file not found: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc})")
    return records


def _require(record: dict, keys: list[str], where: str) -> None:
    missing = [k for k in keys if k not in record]
    if missing:
        raise FormatError(f"{where}: missing fields {missing}")


def load_humaneval(path: str) -> list[ProblemSpec]:
    """Load JSONL records with task_id, prompt, entry_point, test fields."""
    specs = []
    for record in _read_jsonl(path):
        _require(record, ["task_id", "prompt", "entry_point", "test"], path)
        entry_point = record["entry_point"]
        specs.append(
            ProblemSpec(
                task_id=record["task_id"],
                prompt=record["prompt"],
                entry_point=entry_point,
                eval_suite=_suite_from_check(record["test"], entry_point),
                embedded_tests=extract_embedded_tests(record["prompt"], entry_point),
                canonical_solution=record.get("canonical_solution"),
            )
        )
    return specs


def _mbpp_entry_point(record: dict) -> str:
    # The prompt names no function; recover it from the first test assertion.
    for line in record.get("test_list", []):
        try:
            tree = ast.parse(line.strip())
        except SyntaxError:
            continue
        for node in ast.walk(tree):
            if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
                return node.func.id
    raise FormatError(f"task {record.get('task_id')}: cannot infer entry point from tests")


def load_mbpp(path: str) -> list[ProblemSpec]:
    """Load JSONL records with text, test_list, and task_id fields."""
    specs = []
    for record in _read_jsonl(path):
        _require(record, ["text", "test_list", "task_id"], path)
        entry_point = _mbpp_entry_point(record)
        setup = record.get("test_setup_code") or ""
        assertions = tuple(
            (setup.rstrip() + "\n" + t if setup.strip() else t) for t in record["test_list"]
        )
        prompt = record["text"]
        specs.append(
            ProblemSpec(
                task_id=str(record["task_id"]),
                prompt=prompt,
                entry_point=entry_point,
                eval_suite=EvaluationSuite(assertions=assertions),
                embedded_tests=extract_embedded_tests(prompt, entry_point),
                canonical_solution=record.get("code"),
            )
        )
    return specs


def load_apps(root: str) -> list[ProblemSpec]:
    """Load an APPS-style directory: one subdirectory per problem.

    Each problem needs question.txt and input_output.json with fn_name;
    stdin-judged problems cannot be expressed as call/assert tests and are
    rejected rather than silently mis-scored.
    """
    if not os.path.isdir(root):
        raise IoError(f"benchmark directory not found: {root}")
    specs = []
    for name in sorted(os.listdir(root)):
        problem_dir = os.path.join(root, name)
        if not os.path.isdir(problem_dir):
            continue
        question_path = os.path.join(problem_dir, "question.txt")
        io_path = os.path.join(problem_dir, "input_output.json")
        if not os.path.isfile(question_path) or not os.path.isfile(io_path):
            raise IoError(f"{problem_dir}: needs question.txt and input_output.json")
        with open(question_path, encoding="utf-8") as fh:
            prompt = fh.read()
        try:
            with open(io_path, encoding="utf-8") as fh:
                io_spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{io_path}: invalid JSON ({exc})")
        fn_name = io_spec.get("fn_name")
        if not fn_name:
            raise FormatError(f"{io_path}: stdin-style judging (no fn_name) is unsupported")
        inputs, outputs = io_spec.get("inputs", []), io_spec.get("outputs", [])
        if len(inputs) != len(outputs):
            raise FormatError(f"{io_path}: inputs/outputs length mismatch")
        assertions = []
        for args, expected in zip(inputs, outputs):
            if not isinstance(args, list):
                raise FormatError(f"{io_path}: call-form inputs must be argument lists")
            if isinstance(expected, list) and len(expected) == 1:
                expected = expected[0]
            rendered = ", ".join(repr(a) for a in args)
            assertions.append(f"assert {fn_name}({rendered}) == {expected!r}")
        specs.append(
            ProblemSpec(
                task_id=name,
                prompt=prompt,
                entry_point=fn_name,
                eval_suite=EvaluationSuite(assertions=tuple(assertions)),
                embedded_tests=extract_embedded_tests(prompt, fn_name),
            )
        )
    return specs


_LOADERS = {
    "humaneval": load_humaneval,
    "mbpp": load_mbpp,
    "apps": load_apps,
}


def load_benchmark(path: str, fmt: str) -> list[ProblemSpec]:
    """Dispatch to a format-specific loader; fmt is humaneval, mbpp, or apps."""
    loader = _LOADERS.get(fmt)
    if loader is None:
        raise FormatError(f"unknown benchmark format: {fmt!r} (expected one of {sorted(_LOADERS)})")
    return loader(path)
