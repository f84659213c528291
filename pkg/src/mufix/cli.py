"""Command-line interface.

Commands:
  run            run a benchmark through the pipeline and write a run bundle
  eval           recompute metrics from previously written records
  extract-tests  show the tests extractable from each problem's spec text
  replay         re-execute a recorded run from its trace and compare records
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .backend import (
    HttpBackend,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    TraceWriter,
    load_script,
)
from .corpus import load_benchmark
from .errors import FormatError, IoError, MufixError
from .metrics import render_report, summarize, summary_json
from .pipeline import (
    MANIFEST_FILE,
    RECORDS_FILE,
    REPORT_FILE,
    SUMMARY_FILE,
    TRACE_FILE,
    PipelineConfig,
    load_config,
    load_records,
    results_from_records,
    run_benchmark,
    scrub_timing,
)
from .templates import TemplateSet


def build_backend(config: PipelineConfig):
    if config.backend_kind == "http":
        return HttpBackend(base_url=config.base_url, model=config.model)
    if config.backend_kind == "scripted":
        if not config.script_path:
            raise FormatError("scripted backend needs script_path in the config")
        return ScriptedBackend(load_script(config.script_path))
    if config.backend_kind == "replay":
        if not config.trace_path:
            raise FormatError("replay backend needs trace_path in the config")
        return ReplayBackend.from_file(config.trace_path)
    raise FormatError(f"unknown backend kind {config.backend_kind!r}")


def _cmd_run(args) -> int:
    overrides = {"variant": args.variant, "backend_kind": args.backend}
    config = load_config(args.config, overrides)
    specs = load_benchmark(args.benchmark, args.format)
    templates = TemplateSet(config.template_dir)
    base = build_backend(config)
    os.makedirs(args.out, exist_ok=True)
    with TraceWriter(os.path.join(args.out, TRACE_FILE)) as writer:
        backend = RecordingBackend(base, writer)
        records, row = run_benchmark(
            specs,
            config,
            backend,
            templates,
            args.out,
            meta={"benchmark": os.path.abspath(args.benchmark), "format": args.format},
        )
    print(render_report([row]), end="")
    print(f"wrote {len(records)} records to {os.path.join(args.out, RECORDS_FILE)}")
    return 0


def _cmd_eval(args) -> int:
    rows = []
    for path in args.results:
        records = load_records(path)
        if not records:
            raise FormatError(f"{path}: no records")
        config = records[0].get("config", {})
        k = int(config.get("k_samples", 1))
        label = f"{config.get('variant', 'unknown')}:{os.path.basename(path)}"
        rows.append(summarize(results_from_records(records), k, label=label))
    text = render_report(rows)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, REPORT_FILE), "w", encoding="utf-8") as fh:
            fh.write(text)
        with open(os.path.join(args.out, SUMMARY_FILE), "w", encoding="utf-8") as fh:
            fh.write(summary_json(rows))
    print(text, end="")
    return 0


def _cmd_extract_tests(args) -> int:
    specs = load_benchmark(args.benchmark, args.format)
    payload = [
        {
            "task_id": spec.task_id,
            "entry_point": spec.entry_point,
            "embedded_tests": [
                {"call_expr": t.call_expr, "expected_literal": t.expected_literal}
                for t in spec.embedded_tests
            ],
        }
        for spec in specs
    ]
    print(json.dumps(payload, indent=2, ensure_ascii=False))
    return 0


def _cmd_replay(args) -> int:
    manifest_path = os.path.join(args.run, MANIFEST_FILE)
    if not os.path.isfile(manifest_path):
        raise IoError(f"no {MANIFEST_FILE} in {args.run}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    config = PipelineConfig(**manifest["config"])
    specs = load_benchmark(manifest["benchmark"], manifest["format"])
    templates = TemplateSet(config.template_dir)
    backend = ReplayBackend.from_file(os.path.join(args.run, TRACE_FILE))
    out_dir = args.out or (args.run.rstrip("/") + "-replay")
    run_benchmark(
        specs,
        config,
        backend,
        templates,
        out_dir,
        meta={"benchmark": manifest["benchmark"], "format": manifest["format"], "replay_of": args.run},
    )
    # Compare the serialized forms so both sides went through JSON once.
    original = load_records(os.path.join(args.run, RECORDS_FILE))
    records = load_records(os.path.join(out_dir, RECORDS_FILE))
    mismatched = [
        new.get("task_id", "?")
        for old, new in zip(original, records)
        if scrub_timing(old) != scrub_timing(new)
    ]
    if len(original) != len(records):
        mismatched.append(f"record count {len(original)} != {len(records)}")
    if mismatched:
        print(f"replay DIVERGED for: {', '.join(mismatched)}")
        return 1
    print(f"replay identical: {len(records)} records match modulo timing")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mufix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark through the pipeline")
    run.add_argument("--benchmark", required=True, help="benchmark file or directory")
    run.add_argument("--format", required=True, choices=("humaneval", "mbpp", "apps"))
    run.add_argument("--config", default=None, help="flat key = value config file")
    run.add_argument("--out", required=True, help="output directory for the run bundle")
    run.add_argument("--variant", default=None, choices=("full", "woF", "woS", "woT", "zero_shot"))
    run.add_argument("--backend", default=None, choices=("http", "scripted", "replay"))
    run.set_defaults(func=_cmd_run)

    ev = sub.add_parser("eval", help="recompute metrics from records.jsonl files")
    ev.add_argument("--results", required=True, nargs="+", help="records.jsonl paths")
    ev.add_argument("--out", default=None, help="directory for report.txt and summary.json")
    ev.set_defaults(func=_cmd_eval)

    ex = sub.add_parser("extract-tests", help="show tests extractable from each spec")
    ex.add_argument("--benchmark", required=True)
    ex.add_argument("--format", required=True, choices=("humaneval", "mbpp", "apps"))
    ex.set_defaults(func=_cmd_extract_tests)

    rp = sub.add_parser("replay", help="re-execute a recorded run and compare records")
    rp.add_argument("--run", required=True, help="directory of the recorded run")
    rp.add_argument("--out", default=None, help="directory for the replayed bundle")
    rp.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MufixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
