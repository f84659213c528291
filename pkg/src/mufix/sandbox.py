"""Sandboxed execution of candidate programs.

Candidates run out of process behind a one-shot JSON protocol: the runner
reads a job on stdin and prints a single result line on stdout. Candidate
misbehavior (exceptions, wrong output, hangs, even crashing the worker)
always comes back as per-test verdicts; SandboxError is reserved for the
interpreter or the protocol itself breaking.

Job:    {"schema": "mufix-runner/1", "code", "entry_point",
         "tests": [{"call_expr", "expected_literal"}] | "assertions": [str],
         "per_test_timeout_ms": int}
Result: {"verdicts": [{"index", "verdict", "message"}], "fatal"?: str}
"""

from __future__ import annotations

import json
import re
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass

from .corpus import TestCase
from .errors import SandboxError

SCHEMA = "mufix-runner/1"

VERDICT_PASS = "pass"
VERDICT_FAIL = "fail"
VERDICT_ERROR = "error"
VERDICT_TIMEOUT = "timeout"
VERDICTS = (VERDICT_PASS, VERDICT_FAIL, VERDICT_ERROR, VERDICT_TIMEOUT)

_ADDRESS = re.compile(r"0x[0-9a-fA-F]+")


def scrub_addresses(text: str) -> str:
    """Replace memory addresses so messages compare stably across runs."""
    return _ADDRESS.sub("0xADDR", text)


@dataclass(frozen=True)
class ExecLimits:
    per_test_timeout: float = 5.0
    memory_cap_mb: int | None = None
    total_timeout: float | None = None


@dataclass(frozen=True)
class TestVerdict:
    index: int
    verdict: str
    message: str = ""


@dataclass(frozen=True)
class ExecutionReport:
    verdicts: tuple[TestVerdict, ...]
    wall_time: float = 0.0

    @property
    def all_passed(self) -> bool:
        return bool(self.verdicts) and all(v.verdict == VERDICT_PASS for v in self.verdicts)

    @property
    def passed_count(self) -> int:
        return sum(1 for v in self.verdicts if v.verdict == VERDICT_PASS)


def build_job(
    code: str,
    entry_point: str,
    limits: ExecLimits,
    tests: tuple[TestCase, ...] | None = None,
    assertions: tuple[str, ...] | None = None,
) -> dict:
    if (tests is None) == (assertions is None):
        raise ValueError("exactly one of tests or assertions must be given")
    job = {
        "schema": SCHEMA,
        "code": code,
        "entry_point": entry_point,
        "per_test_timeout_ms": int(limits.per_test_timeout * 1000),
    }
    if tests is not None:
        job["tests"] = [
            {"call_expr": t.call_expr, "expected_literal": t.expected_literal} for t in tests
        ]
    else:
        job["assertions"] = list(assertions)
    return job


def _all_verdict(n: int, verdict: str, message: str, wall_time: float) -> ExecutionReport:
    return ExecutionReport(
        verdicts=tuple(TestVerdict(index=i, verdict=verdict, message=message) for i in range(n)),
        wall_time=wall_time,
    )


class SubprocessSandbox:
    """Runs jobs through an external runner process, one process per job.

    The default runner is this package's own; any executable speaking the
    same protocol can be swapped in via runner_cmd.
    """

    def __init__(self, runner_cmd: list[str] | None = None):
        self.runner_cmd = list(runner_cmd) if runner_cmd else [sys.executable, "-m", "mufix.runner"]

    def run_tests(self, code, entry_point, tests, limits: ExecLimits) -> ExecutionReport:
        job = build_job(code, entry_point, limits, tests=tuple(tests))
        return self._run(job, len(tests), limits)

    def run_assertions(self, code, entry_point, assertions, limits: ExecLimits) -> ExecutionReport:
        job = build_job(code, entry_point, limits, assertions=tuple(assertions))
        return self._run(job, len(assertions), limits)

    def _run(self, job: dict, n_items: int, limits: ExecLimits) -> ExecutionReport:
        total = limits.total_timeout or (limits.per_test_timeout * max(n_items, 1) + 10.0)
        preexec = _rlimit_hook(limits.memory_cap_mb)
        started = time.monotonic()
        with tempfile.TemporaryDirectory(prefix="mufix-sbx-") as scratch:
            try:
                proc = subprocess.run(
                    self.runner_cmd,
                    input=json.dumps(job) + "\n",
                    capture_output=True,
                    text=True,
                    timeout=total,
                    cwd=scratch,
                    preexec_fn=preexec,
                )
            except subprocess.TimeoutExpired:
                wall = time.monotonic() - started
                return _all_verdict(
                    n_items, VERDICT_TIMEOUT, f"sandbox total timeout after {total:.1f}s", wall
                )
            except OSError as exc:
                raise SandboxError(f"cannot start runner {self.runner_cmd!r}: {exc}")
        wall = time.monotonic() - started
        result = _last_result_line(proc.stdout)
        if result is None:
            stderr = (proc.stderr or "").strip()[-500:]
            raise SandboxError(
                f"runner produced no result (exit {proc.returncode}); stderr: {stderr!r}"
            )
        return _report_from_result(result, n_items, wall)


def _rlimit_hook(memory_cap_mb: int | None):
    if memory_cap_mb is None:
        return None
    import resource

    cap = memory_cap_mb * 1024 * 1024

    def hook():
        resource.setrlimit(resource.RLIMIT_AS, (cap, cap))

    return hook


def _last_result_line(stdout: str) -> dict | None:
    for line in reversed((stdout or "").splitlines()):
        line = line.strip()
        if not line.startswith("{"):
            continue
        try:
            parsed = json.loads(line)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, dict) and "verdicts" in parsed:
            return parsed
    return None


def _report_from_result(result: dict, n_items: int, wall: float) -> ExecutionReport:
    by_index: dict[int, TestVerdict] = {}
    for raw in result.get("verdicts", []):
        try:
            index = int(raw["index"])
            verdict = str(raw["verdict"])
            message = scrub_addresses(str(raw.get("message", "")))
        except (KeyError, TypeError, ValueError):
            continue
        if verdict in VERDICTS and 0 <= index < n_items:
            by_index[index] = TestVerdict(index=index, verdict=verdict, message=message)
    verdicts = tuple(
        by_index.get(i, TestVerdict(index=i, verdict=VERDICT_ERROR, message="no verdict reported"))
        for i in range(n_items)
    )
    return ExecutionReport(verdicts=verdicts, wall_time=wall)


class InProcessExecutor:
    """Executor stand-in for tests: same interface, no subprocesses.

    Definition and tests run in this interpreter; each test runs on a
    daemon thread so a simulated hang becomes a timeout verdict instead of
    wedging the caller. Candidate failures never raise.
    """

    def run_tests(self, code, entry_point, tests, limits: ExecLimits) -> ExecutionReport:
        items = [("test", t.call_expr, t.expected_literal) for t in tests]
        return self._run(code, items, limits)

    def run_assertions(self, code, entry_point, assertions, limits: ExecLimits) -> ExecutionReport:
        items = [("assert", a, None) for a in assertions]
        return self._run(code, items, limits)

    def _run(self, code, items, limits: ExecLimits) -> ExecutionReport:
        import ast as _ast
        import threading

        started = time.monotonic()
        namespace: dict = {}
        try:
            exec(compile(code, "<candidate>", "exec"), namespace)
        except BaseException as exc:
            message = scrub_addresses(f"definition failed: {type(exc).__name__}: {exc}")
            return _all_verdict(len(items), VERDICT_ERROR, message, time.monotonic() - started)

        verdicts = []
        for i, (mode, expr, expected_literal) in enumerate(items):
            outcome: dict = {}

            def run_one(mode=mode, expr=expr, expected_literal=expected_literal, out=outcome):
                try:
                    if mode == "test":
                        actual = eval(expr, namespace)
                        try:
                            expected = _ast.literal_eval(expected_literal)
                        except (ValueError, SyntaxError):
                            expected = eval(expected_literal, namespace)
                        if bool(actual == expected):
                            out["v"] = (VERDICT_PASS, "")
                        else:
                            out["v"] = (VERDICT_FAIL, f"expected {expected!r}, got {actual!r}")
                    else:
                        exec(expr, dict(namespace))
                        out["v"] = (VERDICT_PASS, "")
                except AssertionError as exc:
                    detail = f": {exc}" if str(exc) else ""
                    out["v"] = (VERDICT_FAIL, f"assertion failed{detail}: {expr.strip()}")
                except BaseException as exc:
                    out["v"] = (VERDICT_ERROR, f"{type(exc).__name__}: {exc}")

            thread = threading.Thread(target=run_one, daemon=True)
            thread.start()
            thread.join(limits.per_test_timeout)
            if thread.is_alive():
                verdicts.append(
                    TestVerdict(
                        index=i,
                        verdict=VERDICT_TIMEOUT,
                        message=f"timed out after {int(limits.per_test_timeout * 1000)} ms",
                    )
                )
                continue
            verdict, message = outcome.get("v", (VERDICT_ERROR, "worker vanished"))
            verdicts.append(TestVerdict(index=i, verdict=verdict, message=scrub_addresses(message)))
        return ExecutionReport(verdicts=tuple(verdicts), wall_time=time.monotonic() - started)
