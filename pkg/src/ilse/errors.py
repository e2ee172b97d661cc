"""Shared exception types.

Every module raises these instead of bare ValueError/RuntimeError so the CLI
can map failure classes onto its exit-code contract (2 = invalid argument,
3 = I/O, 4 = numeric failure).
"""


class IlseError(Exception):
    """Base class for all library errors."""


class InvalidArgument(IlseError, ValueError):
    """A precondition on caller-supplied values was violated."""


class InvalidState(IlseError, RuntimeError):
    """An operation ran before a required earlier step (e.g. layer sweep)."""


class InvariantViolation(IlseError, RuntimeError):
    """An internal consistency check failed on otherwise valid input."""


class NumericFailure(IlseError, ArithmeticError):
    """Non-finite values or other numeric breakdown; carries the op name."""

    def __init__(self, message: str, op: str | None = None):
        super().__init__(message if op is None else f"{op}: {message}")
        self.op = op


class UndefinedCorrelation(IlseError, ValueError):
    """Rank correlation requested on a constant sequence."""


class SearchFailure(IlseError, RuntimeError):
    """Every candidate in a hyperparameter search diverged."""


class FormatError(IlseError, ValueError):
    """Malformed binary file; ``offset`` is the byte position of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
