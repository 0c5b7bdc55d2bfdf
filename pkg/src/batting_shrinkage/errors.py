"""
Exceptions raised by the library; ``main.run`` maps them to exit codes.
"""


class ShrinkageError(Exception):
    """Base class for every error the CLI knows how to report."""

    exit_code: int = 1


class ConfigError(ShrinkageError):
    """Unknown flag, bad value or infeasible combination in a run configuration."""

    exit_code = 2


class DomainError(ShrinkageError, ValueError):
    """Input data or arguments outside the domain of an operation."""

    exit_code = 3


class NumericError(ShrinkageError, ArithmeticError):
    """A numerical procedure failed (non-finite values, failed refinement check)."""

    exit_code = 4
