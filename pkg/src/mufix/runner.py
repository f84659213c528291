"""Built-in test runner speaking the mufix-runner/1 protocol.

Reads one job document on stdin, runs each test in its own forked worker
process, and prints exactly one JSON result line on stdout. Candidate
problems (exceptions, wrong values, hangs, hard crashes) become verdicts;
the process exits nonzero only when the job itself violates the protocol.

Run as: python -m mufix.runner
"""

from __future__ import annotations

import ast
import json
import multiprocessing
import os
import re
import sys

PASS, FAIL, ERROR, TIMEOUT = "pass", "fail", "error", "timeout"
_ADDRESS = re.compile(r"0x[0-9a-fA-F]+")


def _scrub(text: str) -> str:
    return _ADDRESS.sub("0xADDR", text)


def _silence_worker() -> None:
    # Candidate prints must never reach the protocol stream.
    devnull = open(os.devnull, "w")
    sys.stdout = devnull
    sys.stderr = devnull


def _probe_definition(code: str, conn) -> None:
    _silence_worker()
    try:
        exec(compile(code, "<candidate>", "exec"), {})
        conn.send({"ok": True})
    except BaseException as exc:
        conn.send({"ok": False, "message": f"{type(exc).__name__}: {exc}"})
    finally:
        conn.close()


def _run_item(code: str, mode: str, payload: dict, conn) -> None:
    _silence_worker()
    namespace: dict = {}
    try:
        exec(compile(code, "<candidate>", "exec"), namespace)
    except BaseException as exc:
        conn.send({"verdict": ERROR, "message": f"definition failed: {type(exc).__name__}: {exc}"})
        conn.close()
        return
    try:
        if mode == "test":
            actual = eval(payload["call_expr"], namespace)
            literal = payload["expected_literal"]
            try:
                expected = ast.literal_eval(literal.strip())
            except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError):
                expected = eval(literal, namespace)
            if bool(actual == expected):
                conn.send({"verdict": PASS, "message": ""})
            else:
                conn.send({"verdict": FAIL, "message": f"expected {expected!r}, got {actual!r}"})
        else:
            exec(payload["assertion"], namespace)
            conn.send({"verdict": PASS, "message": ""})
    except AssertionError as exc:
        detail = f": {exc}" if str(exc) else ""
        source = payload.get("assertion", "").strip()
        conn.send({"verdict": FAIL, "message": f"assertion failed{detail}: {source}"})
    except BaseException as exc:
        conn.send({"verdict": ERROR, "message": f"{type(exc).__name__}: {exc}"})
    finally:
        conn.close()


def _supervised(target, args, timeout_s: float):
    """Run target in a forked process; returns its message or a marker dict."""
    ctx = multiprocessing.get_context("fork")
    parent_conn, child_conn = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=target, args=(*args, child_conn), daemon=True)
    proc.start()
    child_conn.close()
    got = None
    deadline_hit = False
    try:
        if parent_conn.poll(timeout_s):
            # Readable means either a message or EOF from a dead child.
            try:
                got = parent_conn.recv()
            except (EOFError, OSError):
                got = None
        else:
            deadline_hit = True
    except OSError:
        got = None
    finally:
        parent_conn.close()
    if got is not None:
        proc.join(5.0)
        return got
    if deadline_hit:
        proc.terminate()
        proc.join(1.0)
        if proc.is_alive():
            proc.kill()
            proc.join(1.0)
        return {"timeout": True}
    proc.join(5.0)
    return {"died": proc.exitcode}


def _validate(job) -> tuple[str, list] | str:
    """Return (mode, items) for a well-formed job, or an error string."""
    if not isinstance(job, dict):
        return "job must be a JSON object"
    if job.get("schema") != "mufix-runner/1":
        return f"unsupported schema: {job.get('schema')!r}"
    if not isinstance(job.get("code"), str) or not isinstance(job.get("entry_point"), str):
        return "code and entry_point must be strings"
    has_tests = "tests" in job
    has_asserts = "assertions" in job
    if has_tests == has_asserts:
        return "job needs exactly one of tests or assertions"
    if has_tests:
        items = job["tests"]
        if not isinstance(items, list) or not all(
            isinstance(t, dict) and isinstance(t.get("call_expr"), str)
            and isinstance(t.get("expected_literal"), str)
            for t in items
        ):
            return "tests must be objects with call_expr and expected_literal strings"
        return "test", items
    items = job["assertions"]
    if not isinstance(items, list) or not all(isinstance(a, str) for a in items):
        return "assertions must be a list of strings"
    return "assert", items


def run_job(job: dict) -> dict:
    validated = _validate(job)
    if isinstance(validated, str):
        raise ValueError(validated)
    mode, items = validated
    code = job["code"]
    timeout_ms = job.get("per_test_timeout_ms", 5000)
    if not isinstance(timeout_ms, int) or timeout_ms <= 0:
        raise ValueError("per_test_timeout_ms must be a positive integer")
    timeout_s = timeout_ms / 1000.0

    probe = _supervised(_probe_definition, (code,), timeout_s)
    if probe.get("timeout"):
        fatal = "definition execution timed out"
    elif "died" in probe:
        fatal = f"definition worker died (exit code {probe['died']})"
    elif not probe.get("ok"):
        fatal = _scrub(str(probe.get("message", "definition failed")))
    else:
        fatal = None
    if fatal is not None:
        return {
            "verdicts": [
                {"index": i, "verdict": ERROR, "message": fatal} for i in range(len(items))
            ],
            "fatal": fatal,
        }

    verdicts = []
    for i, item in enumerate(items):
        payload = item if mode == "test" else {"assertion": item}
        got = _supervised(_run_item, (code, mode, payload), timeout_s)
        if got.get("timeout"):
            verdicts.append(
                {"index": i, "verdict": TIMEOUT, "message": f"timed out after {timeout_ms} ms"}
            )
        elif "died" in got:
            verdicts.append(
                {
                    "index": i,
                    "verdict": ERROR,
                    "message": f"worker died (exit code {got['died']})",
                }
            )
        else:
            verdicts.append(
                {"index": i, "verdict": got["verdict"], "message": _scrub(got.get("message", ""))}
            )
    return {"verdicts": verdicts}


def main() -> int:
    raw = sys.stdin.read()
    try:
        job = json.loads(raw)
    except json.JSONDecodeError as exc:
        print(f"protocol violation: invalid JSON job: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_job(job)
    except ValueError as exc:
        print(f"protocol violation: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(json.dumps(result) + "\n")
    sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
