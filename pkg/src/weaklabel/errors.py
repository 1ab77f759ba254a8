"""Exception hierarchy shared by all weaklabel modules."""

from __future__ import annotations


class WeaklabelError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(WeaklabelError):
    """A document or label file could not be parsed.

    ``offset`` is the byte offset into the document (interchange files),
    ``line`` the 1-based line number (label files), when known.
    """

    def __init__(self, message: str, *, offset: int | None = None, line: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class ValidationError(WeaklabelError):
    """An invariant on a domain value was violated."""


class CodecError(WeaklabelError):
    """Run-length counts are inconsistent with the mask dimensions."""


class InfeasibleSplitError(WeaklabelError):
    """The split constraints cannot be satisfied by any assignment."""


class SplitConvergenceError(WeaklabelError):
    """The repair loop ran out of iterations before satisfying constraints."""

    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class UndefinedMetricError(WeaklabelError):
    """A metric has no defined value on this input (e.g. zero ground truths)."""
