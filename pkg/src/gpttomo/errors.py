"""Exception types shared across the package.

Plain ``ValueError`` is used for ordinary invalid arguments; the classes here
cover domain failures a caller may want to catch individually.
"""

from __future__ import annotations


class GptTomoError(Exception):
    """Base class for domain errors raised by this package."""


class RankMismatchError(GptTomoError):
    """Numerical rank of the table does not match the requested rank."""


class IncompatibleModelsError(GptTomoError):
    """Two factorizations do not describe the same table at the same rank."""


class UnboundedPolytopeError(GptTomoError):
    """H-polytope is unbounded; carries a recession-ray certificate."""

    def __init__(self, message: str, ray=None):
        super().__init__(message)
        self.ray = ray


class InfeasibleRegionError(GptTomoError):
    """Constraint set is empty (e.g. a dual with impossible normalization)."""


class DegenerateGeometryError(GptTomoError):
    """Input geometry spans too low a dimension for the requested operation."""


class AmbiguousSelectionError(GptTomoError):
    """Rank selection criteria unmet; carries the full scan for inspection."""

    def __init__(self, message: str, scan=None):
        super().__init__(message)
        self.scan = scan


class SolverFailureError(GptTomoError):
    """A convex subproblem failed to solve to tolerance (internal error)."""


class FitFailureError(GptTomoError):
    """Nonlinear fit did not produce a valid result; carries diagnostics."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class DegenerateWitnessError(GptTomoError):
    """LP witness cannot be rescaled into an ontological model."""


class StageFailureError(GptTomoError):
    """A pipeline stage failed; carries the stage tag and the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
