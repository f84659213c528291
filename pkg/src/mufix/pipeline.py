"""End-to-end orchestration: config, variants, and benchmark runs.

Per sample the flow is: pick driving tests (embedded in the problem text, or
model-generated when absent or forced), obtain a checked understanding,
generate code, run the driving tests, adjust on failure, then score against
the held-out evaluation suite. Variants switch parts off: woF disables
adjustment (m = 0), woS disables refinement (n = 0, one check still runs),
woT forces generated driving tests, zero_shot is a single bare codegen
call. Every model or candidate failure is contained at the sample level;
the batch always completes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .backend import CallTracker, ChatBackend
from .corpus import GENERATED, ProblemSpec, TestCase, limit_tests
from .errors import FormatError, IoError, MufixError
from .metrics import ProblemResult, ReportRow, SampleResult, render_report, summarize, summary_json
from .sandbox import ExecLimits, ExecutionReport, SubprocessSandbox
from .synthesis import generate_candidate, generate_tests
from .templates import TemplateSet
from .understanding import Understanding, obtain_understanding, render_understanding
from .feedback import feedback_loop

VARIANTS = ("full", "woF", "woS", "woT", "zero_shot")
TEST_SOURCES = ("embedded", "generated")
BACKEND_KINDS = ("http", "scripted", "replay")

RECORDS_FILE = "records.jsonl"
TRACE_FILE = "trace.jsonl"
MANIFEST_FILE = "manifest.json"
REPORT_FILE = "report.txt"
SUMMARY_FILE = "summary.json"

_TIMING_KEYS = {"wall_time_s", "started_at", "finished_at"}


@dataclass(frozen=True)
class PipelineConfig:
    n_refinements: int = 1
    m_adjustments: int = 1
    temperature: float = 0.7
    k_samples: int = 1
    test_source: str = "embedded"
    generated_test_count: int = 3
    max_embedded_tests: int | None = None
    variant: str = "full"
    backend_kind: str = "http"
    model: str = "gpt-3.5-turbo"
    base_url: str = "https://api.openai.com/v1"
    script_path: str | None = None
    trace_path: str | None = None
    per_test_timeout: float = 5.0
    memory_cap_mb: int | None = None
    total_timeout: float | None = None
    workers: int = 1
    seed: int = 0
    template_dir: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise FormatError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.test_source not in TEST_SOURCES:
            raise FormatError(f"test_source must be one of {TEST_SOURCES}, got {self.test_source!r}")
        if self.backend_kind not in BACKEND_KINDS:
            raise FormatError(f"backend must be one of {BACKEND_KINDS}, got {self.backend_kind!r}")
        for name in ("n_refinements", "m_adjustments", "generated_test_count", "k_samples", "workers"):
            if getattr(self, name) < 0 or (name in ("k_samples", "workers", "generated_test_count") and getattr(self, name) < 1):
                raise FormatError(f"{name} must be non-negative (k_samples/workers/generated_test_count >= 1)")

    def limits(self) -> ExecLimits:
        return ExecLimits(
            per_test_timeout=self.per_test_timeout,
            memory_cap_mb=self.memory_cap_mb,
            total_timeout=self.total_timeout,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replaced(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


_INT_FIELDS = {"n_refinements", "m_adjustments", "k_samples", "generated_test_count", "workers", "seed", "memory_cap_mb"}
_FLOAT_FIELDS = {"temperature", "per_test_timeout", "total_timeout"}
_OPTIONAL_NONE = {"memory_cap_mb", "total_timeout", "script_path", "trace_path", "template_dir"}


def parse_config_value(key: str, raw: str):
    raw = raw.strip()
    if key == "max_embedded_tests":
        if raw.lower() == "all":
            return None
        try:
            return int(raw)
        except ValueError:
            raise FormatError(f"max_embedded_tests must be an integer or 'all', got {raw!r}")
    if key in _OPTIONAL_NONE and raw.lower() in ("none", ""):
        return None
    if key in _INT_FIELDS:
        try:
            return int(raw)
        except ValueError:
            raise FormatError(f"{key} must be an integer, got {raw!r}")
    if key in _FLOAT_FIELDS:
        try:
            return float(raw)
        except ValueError:
            raise FormatError(f"{key} must be a number, got {raw!r}")
    return raw


def load_config(path: str | None, overrides: dict | None = None) -> PipelineConfig:
    """Build a config from a flat key = value file plus CLI overrides."""
    values: dict = {}
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    if path is not None:
        if not os.path.isfile(path):
            raise IoError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise FormatError(f"{path}:{lineno}: expected key = value")
                key, _, raw = stripped.partition("=")
                key = key.strip()
                if key == "backend":
                    key = "backend_kind"
                if key not in known:
                    raise FormatError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = parse_config_value(key, raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return PipelineConfig(**values)


@dataclass(frozen=True)
class EffectiveSettings:
    """Variant-resolved knobs actually used by a run."""

    n_refinements: int
    m_adjustments: int
    test_source: str
    zero_shot: bool


def resolve_variant(config: PipelineConfig) -> EffectiveSettings:
    n, m, source = config.n_refinements, config.m_adjustments, config.test_source
    if config.variant == "woF":
        m = 0
    elif config.variant == "woS":
        n = 0
    elif config.variant == "woT":
        source = "generated"
    elif config.variant == "zero_shot":
        return EffectiveSettings(0, 0, source, True)
    return EffectiveSettings(n, m, source, False)


def derive_seed(seed: int, task_id: str, sample_index: int) -> int:
    """Stable per-sample seed independent of worker scheduling."""
    digest = hashlib.sha256(f"{seed}:{task_id}:{sample_index}".encode()).hexdigest()
    return int(digest[:16], 16)


def _understanding_dict(u: Understanding) -> dict:
    return {
        "analysis_text": u.analysis_text,
        "test_blocks": [
            {"call_expr": b.call_expr, "reasoning": b.reasoning, "expected": b.expected}
            for b in u.test_blocks
        ],
        "revision": u.revision,
        "status": u.status,
    }


def _report_dict(report: ExecutionReport) -> dict:
    return {
        "verdicts": [
            {"index": v.index, "verdict": v.verdict, "message": v.message}
            for v in report.verdicts
        ],
        "all_passed": report.all_passed,
        "wall_time_s": report.wall_time,
    }


def _test_dict(t: TestCase) -> dict:
    return {"call_expr": t.call_expr, "expected_literal": t.expected_literal, "provenance": t.provenance}


def _error_eval_report(n: int, message: str) -> ExecutionReport:
    from .sandbox import TestVerdict, VERDICT_ERROR

    return ExecutionReport(
        verdicts=tuple(TestVerdict(index=i, verdict=VERDICT_ERROR, message=message) for i in range(n)),
        wall_time=0.0,
    )


def run_sample(
    spec: ProblemSpec,
    config: PipelineConfig,
    backend: ChatBackend,
    templates: TemplateSet,
    executor,
    sample_index: int,
) -> dict:
    """Run one sample end to end; always returns a record, never raises."""
    eff = resolve_variant(config)
    scope = f"{spec.task_id}#{sample_index}"
    tracker = CallTracker()
    chat = backend.scoped(scope, tracker)
    seed = derive_seed(config.seed, spec.task_id, sample_index)
    params = {"temperature": config.temperature, "seed": seed}
    limits = config.limits()
    started = time.monotonic()

    record: dict = {
        "sample_index": sample_index,
        "scope": scope,
        "seed": seed,
        "driving_tests": [],
        "understandings": [],
        "checks": [],
        "candidates": [],
        "reports": [],
        "eval_report": None,
        "feedback_iterations": 0,
        "solved": False,
        "passed_tests": 0,
        "total_tests": spec.eval_suite.count,
        "outcome": "ok",
        "error": None,
    }

    try:
        candidate = None
        if eff.zero_shot:
            candidate = generate_candidate(
                chat, templates, spec.prompt, spec.entry_point, None, params=params
            )
            record["candidates"].append(dataclasses.asdict(candidate))
        else:
            if eff.test_source == "embedded" and spec.embedded_tests:
                driving = limit_tests(spec.embedded_tests, config.max_embedded_tests)
            else:
                driving = generate_tests(
                    chat, templates, spec.prompt, spec.entry_point,
                    config.generated_test_count, params=params,
                )
            record["driving_tests"] = [_test_dict(t) for t in driving]

            understanding, checks = obtain_understanding(
                chat, templates, spec.prompt, driving, eff.n_refinements, params=params
            )
            record["understandings"].append(_understanding_dict(understanding))
            record["checks"] = [
                {
                    "overall": c.overall,
                    "per_test": [
                        {
                            "inferred_literal": t.inferred_literal,
                            "expected_literal": t.expected_literal,
                            "matched": t.matched,
                        }
                        for t in c.per_test
                    ],
                }
                for c in checks
            ]

            candidate = generate_candidate(
                chat,
                templates,
                spec.prompt,
                spec.entry_point,
                render_understanding(understanding),
                params=params,
            )
            record["candidates"].append(dataclasses.asdict(candidate))

            driving_report = executor.run_tests(candidate.code, spec.entry_point, driving, limits)
            record["reports"].append(_report_dict(driving_report))

            if not driving_report.all_passed and eff.m_adjustments > 0:
                outcome = feedback_loop(
                    chat,
                    templates,
                    executor,
                    spec.prompt,
                    spec.entry_point,
                    driving,
                    understanding,
                    candidate,
                    driving_report,
                    eff.m_adjustments,
                    limits,
                    params=params,
                )
                record["feedback_iterations"] = outcome.iterations
                if outcome.candidate is not candidate:
                    candidate = outcome.candidate
                    record["candidates"].append(dataclasses.asdict(candidate))
                    record["reports"].append(_report_dict(outcome.report))
                if outcome.understanding is not understanding:
                    record["understandings"].append(_understanding_dict(outcome.understanding))

        eval_report = executor.run_assertions(
            candidate.code, spec.entry_point, spec.eval_suite.assertions, limits
        )
    except MufixError as exc:
        record["outcome"] = "aborted"
        record["error"] = f"{type(exc).__name__}: {exc}"
        eval_report = _error_eval_report(spec.eval_suite.count, "sample aborted before evaluation")
    except Exception as exc:  # containment: a sample must never sink the batch
        record["outcome"] = "aborted"
        record["error"] = f"unexpected {type(exc).__name__}: {exc}"
        eval_report = _error_eval_report(spec.eval_suite.count, "sample aborted before evaluation")

    record["eval_report"] = _report_dict(eval_report)
    record["passed_tests"] = eval_report.passed_count
    record["solved"] = eval_report.all_passed and spec.eval_suite.count > 0
    record["chat_calls"] = tracker.total_calls
    record["chat_calls_by_kind"] = dict(tracker.by_kind)
    record["prompt_tokens"] = tracker.prompt_tokens
    record["completion_tokens"] = tracker.completion_tokens
    record["wall_time_s"] = time.monotonic() - started
    return record


def run_problem(
    spec: ProblemSpec,
    config: PipelineConfig,
    backend: ChatBackend,
    templates: TemplateSet,
    executor,
) -> dict:
    """All samples for one problem, as a single record (JSONL row)."""
    started = time.monotonic()
    samples = [
        run_sample(spec, config, backend, templates, executor, s)
        for s in range(config.k_samples)
    ]
    outcomes = {s["outcome"] for s in samples}
    if outcomes == {"ok"}:
        outcome = "ok"
    elif "ok" in outcomes:
        outcome = "partial"
    else:
        outcome = "aborted"
    return {
        "task_id": spec.task_id,
        "entry_point": spec.entry_point,
        "config": config.to_dict(),
        "samples": samples,
        "outcome": outcome,
        "chat_calls": sum(s["chat_calls"] for s in samples),
        "prompt_tokens": sum(s["prompt_tokens"] for s in samples),
        "completion_tokens": sum(s["completion_tokens"] for s in samples),
        "wall_time_s": time.monotonic() - started,
    }


def scrub_timing(value):
    """Deep-copy with timing keys removed; the definition of record equality."""
    if isinstance(value, dict):
        return {k: scrub_timing(v) for k, v in value.items() if k not in _TIMING_KEYS}
    if isinstance(value, list):
        return [scrub_timing(v) for v in value]
    return value


def results_from_records(records: list[dict]) -> list[ProblemResult]:
    """Project run records onto the metric-facing result shape."""
    results = []
    for record in records:
        samples = tuple(
            SampleResult(
                solved=bool(s["solved"]),
                passed_tests=int(s["passed_tests"]),
                total_tests=int(s["total_tests"]),
            )
            for s in record["samples"]
        )
        results.append(ProblemResult(task_id=record["task_id"], samples=samples))
    return results


def load_records(path: str) -> list[dict]:
    if not os.path.isfile(path):
        raise IoError(f"records file not found: {path}")
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


def run_benchmark(
    specs: list[ProblemSpec],
    config: PipelineConfig,
    backend: ChatBackend,
    templates: TemplateSet,
    out_dir: str,
    executor=None,
    meta: dict | None = None,
) -> tuple[list[dict], ReportRow]:
    """Run every problem, write the output bundle, return records and row.

    Output files: manifest.json, records.jsonl (submission order),
    report.txt, summary.json; trace.jsonl is written by the recording
    backend wrapper, not here.
    """
    if executor is None:
        executor = SubprocessSandbox()
    os.makedirs(out_dir, exist_ok=True)
    started_at = time.time()

    records: list[dict] = []
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = [
                pool.submit(run_problem, spec, config, backend, templates, executor)
                for spec in specs
            ]
            records = [f.result() for f in futures]
    else:
        records = [run_problem(spec, config, backend, templates, executor) for spec in specs]

    with open(os.path.join(out_dir, RECORDS_FILE), "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    row = summarize(results_from_records(records), config.k_samples, label=config.variant)
    with open(os.path.join(out_dir, REPORT_FILE), "w", encoding="utf-8") as fh:
        fh.write(render_report([row]))
    with open(os.path.join(out_dir, SUMMARY_FILE), "w", encoding="utf-8") as fh:
        fh.write(summary_json([row]))

    manifest = {
        "schema": "mufix-run/1",
        "config": config.to_dict(),
        "n_problems": len(specs),
        "outcomes": {o: sum(1 for r in records if r["outcome"] == o) for o in ("ok", "partial", "aborted")},
        "started_at": started_at,
        "finished_at": time.time(),
    }
    manifest.update(meta or {})
    with open(os.path.join(out_dir, MANIFEST_FILE), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return records, row
