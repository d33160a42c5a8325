"""Exception hierarchy shared by the simulator, estimator and I/O layers."""

from __future__ import annotations


class OpmmError(Exception):
    """Base class for every error raised by this package."""


class DuplicateModelError(OpmmError, ValueError):
    pass


class ModelLookupError(OpmmError, LookupError):
    pass


class DomainError(OpmmError, ValueError):
    """A parameter vector lies outside the physical region of its model."""


class DivergenceError(OpmmError, ArithmeticError):
    """Integration produced a non-finite state."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class InputError(OpmmError, ValueError):
    pass


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class FormatError(InputError):
    pass


class ValidationError(OpmmError):
    pass


class SchemaError(OpmmError, ValueError):
    pass
