"""Sandboxed execution: verdicts, timeouts, containment, protocol edges."""

import json
import subprocess
import sys

import pytest

from mufix.corpus import TestCase
from mufix.errors import SandboxError
from mufix.sandbox import (
    ExecLimits,
    InProcessExecutor,
    SubprocessSandbox,
    build_job,
    scrub_addresses,
)

LIMITS = ExecLimits(per_test_timeout=3.0)
FAST = ExecLimits(per_test_timeout=0.4)

GOOD = "def add(a, b):\n    return a + b\n"


@pytest.fixture(scope="module")
def sandbox():
    return SubprocessSandbox()


def tc(call, expected):
    return TestCase(call_expr=call, expected_literal=expected)


def test_scrub_addresses():
    assert scrub_addresses("<obj at 0x7f3c9a2b> and 0xDEAD") == "<obj at 0xADDR> and 0xADDR"


def test_build_job_requires_one_mode():
    with pytest.raises(ValueError):
        build_job(GOOD, "add", LIMITS)
    with pytest.raises(ValueError):
        build_job(GOOD, "add", LIMITS, tests=(), assertions=())


def test_pass_fail_error_verdicts(sandbox):
    report = sandbox.run_tests(
        GOOD,
        "add",
        (tc("add(1, 2)", "3"), tc("add(1, 2)", "4"), tc("add(1, 'x')", "0")),
        LIMITS,
    )
    assert [v.verdict for v in report.verdicts] == ["pass", "fail", "error"]
    assert not report.all_passed
    assert report.passed_count == 1
    # fail messages carry both sides
    assert "4" in report.verdicts[1].message and "3" in report.verdicts[1].message


def test_hang_becomes_timeout_verdict(sandbox):
    code = "def spin():\n    while True:\n        pass\n"
    report = sandbox.run_tests(code, "spin", (tc("spin()", "1"),), FAST)
    assert report.verdicts[0].verdict == "timeout"
    assert "ms" in report.verdicts[0].message


def test_timeout_isolates_other_tests(sandbox):
    code = "def f(x):\n    if x == 1:\n        while True:\n            pass\n    return x\n"
    report = sandbox.run_tests(code, "f", (tc("f(1)", "1"), tc("f(2)", "2")), FAST)
    assert [v.verdict for v in report.verdicts] == ["timeout", "pass"]


def test_definition_failure_all_error(sandbox):
    report = sandbox.run_tests("raise ValueError('bad module')", "f", (tc("f()", "1"), tc("f()", "2")), LIMITS)
    assert [v.verdict for v in report.verdicts] == ["error", "error"]
    assert "bad module" in report.verdicts[0].message


def test_hard_crash_is_a_verdict(sandbox):
    code = "import os\ndef f():\n    os._exit(9)\n"
    report = sandbox.run_tests(code, "f", (tc("f()", "1"),), LIMITS)
    assert report.verdicts[0].verdict == "error"


def test_candidate_prints_do_not_break_protocol(sandbox):
    code = 'def f(x):\n    print(\'{"verdicts": "spoofed"}\')\n    return x\n'
    report = sandbox.run_tests(code, "f", (tc("f(1)", "1"),), LIMITS)
    assert report.verdicts[0].verdict == "pass"


def test_assertion_mode(sandbox):
    report = sandbox.run_assertions(
        GOOD, "add", ("assert add(1, 1) == 2", "assert add(1, 1) == 3"), LIMITS
    )
    assert [v.verdict for v in report.verdicts] == ["pass", "fail"]
    assert "assert add(1, 1) == 3" in report.verdicts[1].message


def test_literal_comparison_is_native_equality(sandbox):
    # the runner compares evaluated values, so 1 == 1.0 passes natively
    report = sandbox.run_tests("def f():\n    return 1\n", "f", (tc("f()", "1.0"),), LIMITS)
    assert report.verdicts[0].verdict == "pass"


def test_broken_runner_raises_sandbox_error():
    bad = SubprocessSandbox(runner_cmd=[sys.executable, "-c", "print('hello')"])
    with pytest.raises(SandboxError):
        bad.run_tests(GOOD, "add", (tc("add(1, 2)", "3"),), LIMITS)


def test_total_timeout_yields_all_timeout_verdicts():
    slow_runner = SubprocessSandbox(runner_cmd=[sys.executable, "-c", "import time; time.sleep(60)"])
    limits = ExecLimits(per_test_timeout=1.0, total_timeout=0.5)
    report = slow_runner.run_tests(GOOD, "add", (tc("add(1, 2)", "3"),), limits)
    assert report.verdicts[0].verdict == "timeout"
    assert "total" in report.verdicts[0].message


def test_runner_rejects_bad_schema():
    job = {"schema": "wrong/9", "code": "", "entry_point": "f", "assertions": []}
    proc = subprocess.run(
        [sys.executable, "-m", "mufix.runner"],
        input=json.dumps(job),
        capture_output=True,
        text=True,
        timeout=30,
    )
    assert proc.returncode != 0
    assert proc.stdout == ""


class TestInProcessExecutor:
    def test_pass_fail(self):
        ex = InProcessExecutor()
        report = ex.run_tests(GOOD, "add", (tc("add(1, 2)", "3"), tc("add(1, 2)", "5")), LIMITS)
        assert [v.verdict for v in report.verdicts] == ["pass", "fail"]

    def test_crash_contained(self):
        ex = InProcessExecutor()
        report = ex.run_tests("def f():\n    raise RuntimeError('x')\n", "f", (tc("f()", "1"),), LIMITS)
        assert report.verdicts[0].verdict == "error"

    def test_definition_failure(self):
        ex = InProcessExecutor()
        report = ex.run_assertions("1/0", "f", ("assert True",), LIMITS)
        assert report.verdicts[0].verdict == "error"
        assert "definition failed" in report.verdicts[0].message

    def test_simulated_hang_times_out(self):
        ex = InProcessExecutor()
        code = "import time\ndef f():\n    time.sleep(30)\n"
        report = ex.run_tests(code, "f", (tc("f()", "1"),), ExecLimits(per_test_timeout=0.2))
        assert report.verdicts[0].verdict == "timeout"

    def test_assertions(self):
        ex = InProcessExecutor()
        report = ex.run_assertions(GOOD, "add", ("assert add(2, 2) == 4",), LIMITS)
        assert report.all_passed
