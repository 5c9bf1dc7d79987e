"""Exception types raised across the package."""

from __future__ import annotations


class MapfluctError(Exception):
    """Base class for all package errors."""


class Violation:
    """One failed model invariant: a machine-readable code, a field path and a message."""

    __slots__ = ("code", "path", "message")

    def __init__(self, code: str, path: str, message: str):
        self.code = code
        self.path = path
        self.message = message

    def __repr__(self) -> str:
        return f"Violation({self.code!r}, {self.path!r}, {self.message!r})"

    def __str__(self) -> str:
        return f"{self.code} at {self.path}: {self.message}"


class ModelValidationError(MapfluctError):
    """Raised by ``validate`` with the complete list of violations."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))

    @property
    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


class SchemaError(MapfluctError):
    """Malformed model file (unknown or missing field, wrong type)."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class DomainViolation(MapfluctError, ValueError):
    """Argument outside the domain of a transform or formula."""

    def __init__(self, message: str, state: int | None = None):
        self.state = state
        super().__init__(message)


class SpectralError(MapfluctError):
    """Eigen-solver output failed a Perron-Frobenius check."""


class NoFiniteRoot(MapfluctError):
    """kappa(alpha) = q has no finite solution on [0, inf)."""


class RootCountMismatch(MapfluctError):
    """The root search did not produce exactly N right half-plane roots."""


class DefectiveRoots(MapfluctError):
    """Coalescing roots or a deficient null space; perturb q and retry."""


class SingularXi(MapfluctError):
    """Ladder matrix not invertible."""


class DefectiveMatrix(MapfluctError):
    """Matrix is not (numerically) diagonalizable."""


class SingularShift(MapfluctError):
    """q*I + A is singular."""


class NoDensity(MapfluctError):
    """Some state has no Brownian part, so X(t) has no smooth density."""


class CommuteGateFailed(MapfluctError):
    """Half-line transforms do not commute to the configured tolerance."""

    def __init__(self, residual: float, threshold: float):
        self.residual = residual
        self.threshold = threshold
        super().__init__(f"commutator norm {residual:.3e} exceeds gate {threshold:.1e}")


class InsufficientSamples(MapfluctError):
    """A Monte Carlo cell has too few observations."""


class ShapeViolation(MapfluctError):
    """Model is not of the drift-minus-subordinator form."""


class EmptyCell(MapfluctError):
    """A start state has no replications."""
