"""Failure taxonomy shared by every transport, serializer and runner.

All conditions a caller may want to handle are subclasses of RunnerError,
so `except RunnerError` catches any bridge-level failure while letting
programming errors (TypeError, ...) propagate.
"""

from __future__ import annotations


class RunnerError(Exception):
    """Base class for every failure raised by this package."""


class Timeout(RunnerError):
    """A blocking call did not finish within its deadline."""

    def __init__(self, elapsed_ms: float, context: str = ""):
        self.elapsed_ms = float(elapsed_ms)
        msg = f"timed out after {self.elapsed_ms:.0f} ms"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class RetriesExhausted(RunnerError):
    """Every connection attempt failed, including all retries.

    attempts counts the initial try plus retries.  attempt_offsets_ms holds
    the measured start offset of each attempt relative to the first, so the
    backoff schedule can be inspected after the fact.
    """

    def __init__(
        self,
        attempts: int,
        attempt_offsets_ms: list[float] | None = None,
        cause: str = "",
    ):
        self.attempts = int(attempts)
        self.attempt_offsets_ms = list(attempt_offsets_ms or [])
        msg = f"gave up after {self.attempts} attempts"
        if cause:
            msg = f"{msg} (last error: {cause})"
        super().__init__(msg)


class PeerClosed(RunnerError):
    """The other side closed the channel mid-conversation."""

    def __init__(self, detail: str = "peer closed the channel"):
        super().__init__(detail)


class Malformed(RunnerError):
    """Bytes or arguments that violate a wire format or an API contract."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class TypeMismatch(RunnerError):
    """A feature arrived with a different dtype than the caller declared."""

    def __init__(self, key: str, expected: str, found: str):
        self.key = key
        self.expected = str(expected)
        self.found = str(found)
        super().__init__(f"feature {key!r}: expected {self.expected}, found {self.found}")


class ModelError(RunnerError):
    """The peer's handler failed and reported an error instead of a result."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)
