"""Exception hierarchy shared by all heatkern modules."""

from __future__ import annotations


class HeatKernError(Exception):
    """Base class for library failures."""


class ValidationError(HeatKernError, ValueError):
    pass


class DomainError(HeatKernError, ValueError):
    pass


class BranchCutError(HeatKernError):
    pass


class DegeneratePencilError(HeatKernError):
    pass


class NearSpectrumError(HeatKernError):
    pass


class EllipticityError(HeatKernError):
    """Raised when a symbol fails a positivity/invertibility requirement.

    ``witness`` carries the offending sample (point, covector) when known.
    """

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class DegenerateBranchError(HeatKernError):
    pass


class ConvexityError(HeatKernError):
    pass


class IllConditionedError(HeatKernError):
    pass


class FlowDegeneracyError(HeatKernError):
    def __init__(self, message: str, location=None):
        super().__init__(message)
        self.location = location


class UnsupportedOrderError(HeatKernError, ValueError):
    pass


class ConfigurationError(HeatKernError, ValueError):
    pass


class ContourPlacementError(HeatKernError):
    pass


class CrossValidationError(HeatKernError):
    def __init__(self, message: str, delta: float | None = None):
        super().__init__(message)
        self.delta = delta


class ResolutionError(HeatKernError, ValueError):
    pass


class WindowError(HeatKernError):
    pass


class ConfigError(HeatKernError):
    """Collected schema/semantic errors; ``errors`` is a list of (path, message)."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        lines = [f"{path}: {msg}" for path, msg in self.errors]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


class AccuracyWarning(UserWarning):
    pass
