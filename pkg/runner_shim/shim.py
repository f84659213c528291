"""Standalone test runner speaking the mufix-runner/1 protocol.

Reads one job document on stdin and prints exactly one JSON result line on
stdout; nothing else ever reaches that stream. A single forked worker
defines the candidate once per job and streams per-test verdicts back over
a pipe while the parent enforces the per-test deadline. On a timeout the
worker is killed and a fresh one picks up the remaining tests, so verdicts
already recorded survive a hang. Candidate stdout/stderr are captured at
the file-descriptor level, truncated to 8 KiB per test, and folded into the
verdict message.

Candidate misbehavior (exceptions, wrong values, hangs, hard crashes)
always becomes verdicts; the exit code is nonzero only when the job itself
violates the protocol.

Caveats, by design: the namespace is shared across the tests of one job
(stateful candidates can leak between tests, and a respawn after a hang
re-runs the definition), and there is no OS-level isolation beyond what the
invoking sandbox provides.

Run as: python shim.py  (job on stdin, result on stdout)
"""

from __future__ import annotations

import ast
import json
import multiprocessing
import os
import re
import sys
import tempfile
import time

SCHEMA = "mufix-runner/1"
PASS, FAIL, ERROR, TIMEOUT = "pass", "fail", "error", "timeout"
CAPTURE_CAP = 8192
_ADDRESS = re.compile(r"0x[0-9a-fA-F]+")


def _scrub(text: str) -> str:
    return _ADDRESS.sub("0xADDR", text)


class _FdCapture:
    """Redirect fd 1 and 2 into a temp file for the duration of one test."""

    def __enter__(self):
        sys.stdout.flush()
        sys.stderr.flush()
        self._tmp = tempfile.TemporaryFile()
        self._saved = (os.dup(1), os.dup(2))
        os.dup2(self._tmp.fileno(), 1)
        os.dup2(self._tmp.fileno(), 2)
        return self

    def __exit__(self, *exc):
        try:
            sys.stdout.flush()
            sys.stderr.flush()
        except Exception:
            pass
        os.dup2(self._saved[0], 1)
        os.dup2(self._saved[1], 2)
        os.close(self._saved[0])
        os.close(self._saved[1])
        return False

    def text(self) -> str:
        self._tmp.seek(0)
        data = self._tmp.read(CAPTURE_CAP + 1)
        self._tmp.close()
        truncated = len(data) > CAPTURE_CAP
        text = data[:CAPTURE_CAP].decode("utf-8", errors="replace")
        if truncated:
            text += f"\n... [output truncated at {CAPTURE_CAP} bytes]"
        return text


def _attach_capture(message: str, captured: str) -> str:
    captured = captured.strip("\n")
    if not captured:
        return message
    block = f"captured output:\n{captured}"
    return f"{message}\n{block}" if message else block


def _judge(mode: str, item, namespace: dict) -> tuple[str, str]:
    """Run one test in the shared namespace; returns (verdict, message)."""
    try:
        if mode == "test":
            actual = eval(item["call_expr"], namespace)
            literal = item["expected_literal"]
            try:
                expected = ast.literal_eval(literal.strip())
            except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError):
                expected = eval(literal, namespace)
            if bool(actual == expected):
                return PASS, ""
            return FAIL, f"expected {expected!r}, got {actual!r}"
        exec(item, namespace)
        return PASS, ""
    except AssertionError as exc:
        detail = f": {exc}" if str(exc) else ""
        source = item.strip() if mode == "assert" else ""
        return FAIL, f"assertion failed{detail}: {source}"
    except BaseException as exc:
        return ERROR, f"{type(exc).__name__}: {exc}"


def _worker(code: str, mode: str, items: list, start: int, conn) -> None:
    """Define the candidate once, then stream a verdict per remaining test."""
    # The worker never touches the protocol stream: fd 1/2 point at devnull
    # between tests and at the capture file during one.
    devnull = os.open(os.devnull, os.O_WRONLY)
    os.dup2(devnull, 1)
    os.dup2(devnull, 2)
    os.close(devnull)

    namespace: dict = {}
    with _FdCapture() as cap:
        try:
            exec(compile(code, "<candidate>", "exec"), namespace)
            failure = None
        except BaseException as exc:
            failure = f"{type(exc).__name__}: {exc}"
    captured = cap.text()
    if failure is not None:
        conn.send({"kind": "fatal", "message": _attach_capture(failure, captured)})
        conn.close()
        return
    conn.send({"kind": "defined"})

    for index in range(start, len(items)):
        with _FdCapture() as cap:
            verdict, message = _judge(mode, items[index], namespace)
        conn.send(
            {
                "kind": "verdict",
                "index": index,
                "verdict": verdict,
                "message": _attach_capture(message, cap.text()),
            }
        )
    conn.close()


def _spawn(code: str, mode: str, items: list, start: int):
    ctx = multiprocessing.get_context("fork")
    parent_conn, child_conn = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_worker, args=(code, mode, items, start, child_conn), daemon=True)
    sys.stdout.flush()
    proc.start()
    child_conn.close()
    return proc, parent_conn


def _kill(proc) -> None:
    if proc.is_alive():
        proc.kill()
    proc.join(1.0)


def _await_message(conn, proc, timeout_s: float) -> dict:
    """Next worker message, or a timeout/died marker. Kills on timeout."""
    deadline = time.monotonic() + timeout_s
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            _kill(proc)
            return {"type": "timeout"}
        try:
            readable = conn.poll(remaining)
        except OSError:
            readable = True
        if not readable:
            continue
        # Readable means either a message or EOF from a dead worker.
        try:
            return {"type": "msg", "msg": conn.recv()}
        except (EOFError, OSError):
            proc.join(5.0)
            return {"type": "died", "exitcode": proc.exitcode}


def _validate(job) -> tuple[str, list] | str:
    """Return (mode, items) for a well-formed job, or an error string."""
    if not isinstance(job, dict):
        return "job must be a JSON object"
    if job.get("schema") != SCHEMA:
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
    if not isinstance(timeout_ms, int) or isinstance(timeout_ms, bool) or timeout_ms <= 0:
        raise ValueError("per_test_timeout_ms must be a positive integer")
    timeout_s = timeout_ms / 1000.0

    n = len(items)
    verdicts: dict[int, dict] = {}

    def fill_errors(start: int, message: str) -> None:
        for i in range(start, n):
            verdicts[i] = {"index": i, "verdict": ERROR, "message": _scrub(message)}

    next_index = 0
    first_spawn = True
    fatal = None
    while first_spawn or next_index < n:
        proc, conn = _spawn(code, mode, items, next_index)
        try:
            got = _await_message(conn, proc, timeout_s)
            defined = got["type"] == "msg" and got["msg"].get("kind") == "defined"
            if not defined:
                if got["type"] == "timeout":
                    message = "definition execution timed out"
                elif got["type"] == "died":
                    message = f"definition worker died (exit code {got['exitcode']})"
                else:
                    message = str(got["msg"].get("message", "definition failed"))
                if first_spawn:
                    fatal = _scrub(message)
                    fill_errors(0, fatal)
                else:
                    fill_errors(next_index, f"worker restart failed: {message}")
                break
            first_spawn = False

            interrupted = False
            while next_index < n:
                got = _await_message(conn, proc, timeout_s)
                if got["type"] == "msg" and got["msg"].get("kind") == "verdict":
                    msg = got["msg"]
                    verdicts[next_index] = {
                        "index": next_index,
                        "verdict": msg["verdict"],
                        "message": _scrub(str(msg.get("message", ""))),
                    }
                    next_index += 1
                    continue
                if got["type"] == "timeout":
                    verdicts[next_index] = {
                        "index": next_index,
                        "verdict": TIMEOUT,
                        "message": f"timed out after {timeout_ms} ms",
                    }
                else:
                    verdicts[next_index] = {
                        "index": next_index,
                        "verdict": ERROR,
                        "message": f"worker died (exit code {got.get('exitcode')})",
                    }
                next_index += 1
                interrupted = True
                break
            if not interrupted:
                break
        finally:
            conn.close()
            _kill(proc)

    result: dict = {"verdicts": [verdicts[i] for i in range(n)]}
    if fatal is not None:
        result["fatal"] = fatal
    return result


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
