"""
Exception hierarchy shared by the numerical services and the CLI.

Every error carries the process exit code the CLI should report for it.
"""
from typing import Optional


class UbmotError(Exception):
    exit_code = 1


class DomainError(UbmotError, ValueError):
    """A parameter lies outside the domain of the requested operation."""

    exit_code = 2


class WindowTooSmallError(DomainError):
    """An explicit truncation window cannot certify the requested tail bound."""

    def __init__(self, message: str, tail_bound: float):
        super().__init__(message)
        self.tail_bound = tail_bound


class DegeneratePointsError(DomainError):
    pass


class StabilityError(UbmotError, ArithmeticError):
    """Too many digits lost to cancellation or recurrence growth."""

    exit_code = 3

    def __init__(self, message: str, err_estimate: Optional[float] = None):
        super().__init__(message)
        self.err_estimate = err_estimate


class ConvergenceError(StabilityError):
    def __init__(self, message: str, last_residual: Optional[float] = None):
        super().__init__(message, err_estimate=last_residual)
        self.last_residual = last_residual


class QuadratureError(ConvergenceError):
    pass


class UnitarityDriftError(StabilityError):
    pass
