"""Scoring: Pass@k and average pass ratio over problem results.

Pass@k here is the plain benchmark definition: a problem counts as solved
when any of its first k samples passes every evaluation test. The average
pass ratio is the unweighted mean, over problems, of the first sample's
fraction of passing tests. Both are computed exactly as rationals and only
converted to float at the edge; rendering rounds half-up to two decimals,
so 148 of 164 formats as "90.24%".
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

from .errors import EmptyResults, InsufficientSamples, ZeroTests


@dataclass(frozen=True)
class SampleResult:
    solved: bool
    passed_tests: int
    total_tests: int

    def __post_init__(self):
        if self.solved and not (self.total_tests > 0 and self.passed_tests == self.total_tests):
            raise ValueError("solved requires passed_tests == total_tests > 0")


@dataclass(frozen=True)
class ProblemResult:
    task_id: str
    samples: tuple[SampleResult, ...]


def pass_at_k(results: list[ProblemResult], k: int) -> Fraction:
    """Fraction of problems with a solving sample among the first k."""
    if not results:
        raise EmptyResults("pass@k over zero problems is undefined")
    if k < 1:
        raise InsufficientSamples(f"k must be >= 1, got {k}")
    short = [r.task_id for r in results if len(r.samples) < k]
    if short:
        raise InsufficientSamples(f"pass@{k} needs {k} samples; too few for {short[:5]}")
    solved = sum(1 for r in results if any(s.solved for s in r.samples[:k]))
    return Fraction(solved, len(results))


def avg_pass_ratio(results: list[ProblemResult]) -> Fraction:
    """Unweighted mean of per-problem first-sample pass fractions."""
    if not results:
        raise EmptyResults("average pass ratio over zero problems is undefined")
    total = Fraction(0)
    for r in results:
        if not r.samples:
            raise InsufficientSamples(f"{r.task_id}: no samples recorded")
        first = r.samples[0]
        if first.total_tests <= 0:
            raise ZeroTests(f"{r.task_id}: sample has zero evaluation tests")
        total += Fraction(first.passed_tests, first.total_tests)
    return total / len(results)


def render_percent(value: Fraction) -> str:
    """Exact rational -> half-up percentage with two decimals."""
    scaled = Decimal(value.numerator * 100) / Decimal(value.denominator)
    return f"{scaled.quantize(Decimal('0.01'), rounding=ROUND_HALF_UP)}%"


@dataclass(frozen=True)
class ReportRow:
    label: str
    n_problems: int
    k: int
    pass_at_k: Fraction
    avg_pass_ratio: Fraction


def summarize(results: list[ProblemResult], k: int, label: str) -> ReportRow:
    return ReportRow(
        label=label,
        n_problems=len(results),
        k=k,
        pass_at_k=pass_at_k(results, k),
        avg_pass_ratio=avg_pass_ratio(results),
    )


def render_report(rows: list[ReportRow]) -> str:
    """Human-readable table, one row per labeled result set."""
    lines = [
        f"{'technique':<24} {'problems':>8} {'k':>3} {'pass@k':>10} {'avg pass ratio':>15}",
        "-" * 64,
    ]
    for row in sorted(rows, key=lambda r: r.label):
        lines.append(
            f"{row.label:<24} {row.n_problems:>8} {row.k:>3} "
            f"{render_percent(row.pass_at_k):>10} {render_percent(row.avg_pass_ratio):>15}"
        )
    return "\n".join(lines) + "\n"


def summary_json(rows: list[ReportRow]) -> str:
    """Machine-readable counterpart: exact floats plus rendered strings."""
    payload = []
    for row in sorted(rows, key=lambda r: r.label):
        payload.append(
            {
                "label": row.label,
                "n_problems": row.n_problems,
                "k": row.k,
                "pass_at_k": float(row.pass_at_k),
                "avg_pass_ratio": float(row.avg_pass_ratio),
                "pass_at_k_rendered": render_percent(row.pass_at_k),
                "avg_pass_ratio_rendered": render_percent(row.avg_pass_ratio),
            }
        )
    return json.dumps(payload, indent=2) + "\n"
