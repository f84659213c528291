"""Specification-understanding repair for LLM code generation.

The pipeline improves generated code by first making the model state and
verify its understanding of the specification against embedded test cases
(mask the expected outputs, re-infer them, refine on mismatch), then, when
the generated code fails those tests, reconciling what the code actually
does with what the problem asks for and regenerating. A sandboxed runner
executes candidates; metrics cover Pass@k and average pass ratio.
"""

__version__ = "0.1.0"

from .corpus import EvaluationSuite, ProblemSpec, TestCase, extract_embedded_tests, load_benchmark
from .errors import MufixError
from .metrics import ProblemResult, SampleResult, avg_pass_ratio, pass_at_k, render_percent
from .pipeline import PipelineConfig, run_benchmark, run_problem, run_sample
from .sandbox import ExecLimits, ExecutionReport, InProcessExecutor, SubprocessSandbox, TestVerdict
from .understanding import CheckResult, MaskedUnderstanding, Understanding, mask, unmask

__all__ = [
    "__version__",
    "CheckResult",
    "EvaluationSuite",
    "ExecLimits",
    "ExecutionReport",
    "InProcessExecutor",
    "MaskedUnderstanding",
    "MufixError",
    "PipelineConfig",
    "ProblemResult",
    "ProblemSpec",
    "SampleResult",
    "SubprocessSandbox",
    "TestCase",
    "TestVerdict",
    "Understanding",
    "avg_pass_ratio",
    "extract_embedded_tests",
    "load_benchmark",
    "mask",
    "pass_at_k",
    "render_percent",
    "run_benchmark",
    "run_problem",
    "run_sample",
    "unmask",
]
