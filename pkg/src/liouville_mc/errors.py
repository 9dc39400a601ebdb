"""Exception hierarchy shared by every module."""

from __future__ import annotations


class LiouvilleError(Exception):
    """Base class for all package errors."""


class DomainError(LiouvilleError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class DivergenceError(DomainError):
    """The requested quantity is infinite (kernel diagonal, transform past its abscissa)."""


class HorizonError(LiouvilleError, RuntimeError):
    """A simulated path ended before the requested passage level was reached.

    Attributes
    ----------
    deepest_level : int
        Deepest level that was reached before the horizon ran out.
    """

    def __init__(self, message: str, deepest_level: int = 0):
        super().__init__(message)
        self.deepest_level = deepest_level


class VerificationError(LiouvilleError, AssertionError):
    """An internal consistency check failed (for example two enumerations disagree)."""


class ConfigError(LiouvilleError, ValueError):
    """Malformed or inconsistent configuration file.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending entry, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
