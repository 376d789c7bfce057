"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class EstimationError(RuntimeError):
    """Base class for runtime failures of the estimator.

    ``stage`` is filled in by :func:`ellipsoidal_attitude.filter.filter_step`
    so callers can tell which part of the pipeline gave up.
    """

    stage: str | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class DegenerateGeometryError(EstimationError):
    """Direction geometry too poor to determine an attitude."""


class IntegratorError(EstimationError):
    """The implicit step of the variational integrator could not be solved."""

    def __init__(self, message: str, *, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class EmptyIntersectionError(EstimationError):
    """Predicted and measured ellipsoids do not intersect."""


class ScenarioError(ValueError):
    """Invalid scenario file; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
