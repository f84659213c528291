"""Exception taxonomy shared across the package.

Every error raised by this package derives from MufixError so callers can
catch one base type at the orchestration boundary. Subclasses mark which
stage failed; none of them carry control flow beyond that.
"""


class MufixError(Exception):
    """Base class for all package errors."""


class IoError(MufixError):
    """A file or directory required by a command is missing or unreadable."""


class FormatError(MufixError):
    """An input file exists but its contents violate the expected format."""


class BackendError(MufixError):
    """The chat backend failed after retries, or returned unusable output."""


class ScriptExhausted(BackendError):
    """A scripted backend ran out of queued responses.

    Message names the scope and ordinal of the unsatisfiable call.
    """


class ReplayMismatch(BackendError):
    """A replayed call did not match the recorded trace.

    Message names the scope and the ordinal at which divergence occurred.
    """


class NoEmbeddedTests(MufixError):
    """A problem spec has no extractable tests and generation is disabled."""


class MalformedUnderstanding(MufixError):
    """Model output could not be parsed into the structured understanding."""


class NoCodeFound(MufixError):
    """No code block or parseable definition found in a model response."""


class SandboxError(MufixError):
    """The sandbox interpreter or protocol failed (not the candidate code)."""


class InsufficientSamples(MufixError):
    """Pass@k was requested with k larger than the recorded sample count."""


class EmptyResults(MufixError):
    """A metrics aggregation was asked to summarize zero problems."""


class ZeroTests(MufixError):
    """A sample's evaluation suite contained no tests at all."""


class NoTestsGenerated(MufixError):
    """The test-generation call produced no parseable test cases."""
