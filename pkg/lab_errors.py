"""
Exception types shared across the ISE laboratory modules.

EXIT_CODES maps each type to the exit code the CLI returns for it.
"""

from typing import Optional


class LabError(Exception):
    """Base class for laboratory errors."""
    pass


class InvalidArgumentError(LabError, ValueError):
    """Raised when an operation's preconditions are violated."""
    pass


class UnsupportedError(LabError, NotImplementedError):
    """Raised for documented regimes the laboratory does not cover."""
    pass


class NumericalFailureError(LabError):
    """Raised when quadrature or contour inversion fails to converge."""

    def __init__(self, message: str, error_estimate: Optional[float] = None, detail: Optional[str] = None):
        super().__init__(message)
        self.error_estimate = error_estimate
        self.detail = detail

    def __str__(self) -> str:
        text = super().__str__()
        if self.error_estimate is not None:
            text += f" (error estimate {self.error_estimate:.3e})"
        if self.detail:
            text += f": {self.detail}"
        return text


class ResourceLimitError(LabError):
    """Raised when an enumeration, table or sampling budget is exceeded."""

    def __init__(self, message: str, required: Optional[float] = None, limit: Optional[float] = None):
        super().__init__(message)
        self.required = required
        self.limit = limit

    def __str__(self) -> str:
        text = super().__str__()
        if self.required is not None or self.limit is not None:
            text += f" (required={self.required}, limit={self.limit})"
        return text


EXIT_CODES = {
    InvalidArgumentError: 2,
    UnsupportedError: 2,
    NumericalFailureError: 3,
    ResourceLimitError: 4,
}


def exit_code_for(error: BaseException) -> int:
    """Exit code for an exception; unmapped laboratory errors count as failures (1)."""
    for error_type, code in EXIT_CODES.items():
        if isinstance(error, error_type):
            return code
    return 1
