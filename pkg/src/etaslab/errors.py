"""Exception and warning types shared across the package."""

from __future__ import annotations


class EtasLabError(Exception):
    """Base class for all etas-lab errors."""


class CatalogParseError(EtasLabError):
    """Malformed catalogue input.

    Carries the 1-based line number of the offending row (``line`` is None
    for structural problems such as a bad header).
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidWindowError(EtasLabError):
    """Observation window with non-positive length, or a point outside it."""


class InsufficientDataError(EtasLabError):
    """Not enough events for the requested computation."""


class DegenerateMagnitudesError(EtasLabError):
    """All magnitudes equal the completeness threshold; rate MLE undefined."""


class DegenerateLikelihoodError(EtasLabError):
    """An observed event has zero conditional intensity."""


class LinearizationError(EtasLabError):
    """A likelihood component is non-finite at the expansion point."""


class HessianNotPositiveDefiniteError(EtasLabError):
    """Negative Hessian at the mode has non-positive eigenvalues.

    ``directions`` holds (eigenvalue, eigenvector) pairs for the offending
    subspace.
    """

    def __init__(self, message: str, directions):
        self.directions = directions
        super().__init__(message)


class SupercriticalError(EtasLabError):
    """Branching configuration with expected offspring per event >= 1."""

    def __init__(self, message: str, ratio: float):
        self.ratio = ratio
        super().__init__(message)


class CatalogOverflowWarning(UserWarning):
    """A simulation hit its event cap and returned a truncated catalogue."""
