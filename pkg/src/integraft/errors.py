"""Exception types shared across the package.

Input problems (bad files, bad shapes, bad parameter values) raise
:class:`ValidationError` or one of its subclasses so callers can catch a
single type at CLI boundaries.  Programming errors (calling a routine on
data that skipped a required preparation step) raise
:class:`ContractError`, and numerical failures inside iterative routines
raise :class:`SolverError` / :class:`CalibrationError`.
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Invalid user-supplied data or parameter value."""


class DataFormatError(ValidationError):
    """Malformed input file; carries file and row context when known."""

    def __init__(self, message: str, path: str | None = None, row: int | None = None):
        ctx = ""
        if path is not None:
            ctx = f"{path}"
            if row is not None:
                ctx += f", row {row}"
            ctx = f" [{ctx}]"
        super().__init__(message + ctx)
        self.path = path
        self.row = row


class DimensionError(ValidationError):
    """Array shapes disagree across studies or with the fitted model."""


class ContractError(RuntimeError):
    """A routine was called on inputs that skipped a required step."""


class SolverError(RuntimeError):
    """The optimizer detected divergence or an internal inconsistency."""


class CalibrationError(RuntimeError):
    """Iterative calibration failed to reach its target."""
