"""Exception hierarchy shared across the package.

Two broad families matter to callers: configuration/input problems
(ValidationError and subclasses, CLI exit code 1) and failures that occur
while processing well-formed inputs (RunError and subclasses, exit code 2).
"""

from __future__ import annotations


class VcbenchError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(VcbenchError):
    """Caller-supplied input or configuration is invalid."""


class FormatError(ValidationError):
    """A serialized payload does not conform to its container format."""


class TruncationError(FormatError):
    """A file or buffer ended before the declared amount of data."""

    def __init__(self, expected: int, actual: int, what: str = "buffer"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"truncated {what}: expected {expected} bytes, got {actual}")


class RunError(VcbenchError):
    """Processing failed on otherwise well-formed input."""


class CorruptionError(RunError):
    """Decoded data is internally inconsistent with its metadata."""


class AdapterError(RunError):
    """An external codec command failed."""

    def __init__(self, message: str, stderr: str = ""):
        self.stderr = stderr
        if stderr:
            message = f"{message}; stderr: {stderr.strip()}"
        super().__init__(message)


class ProtocolError(RunError):
    """A backend session violated the line-delimited JSON protocol."""


class SessionError(RunError):
    """A backend child process died or became unusable."""


class CurveMonotonicityError(ValidationError):
    """Curve points do not have strictly increasing accuracy."""


class CurveOverlapError(ValidationError):
    """Two curves share no accuracy interval."""


class IncompleteRunError(RunError):
    """Rate computation was asked to aggregate an incomplete set of records."""

    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__("missing rate records for items: " + ", ".join(self.missing))
