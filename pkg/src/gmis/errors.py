from __future__ import annotations


class GMISError(Exception):
    """Base exception for the gmis package."""


class ParameterError(GMISError):
    """Raised when invalid parameters are provided to a function or config."""


class DomainError(ParameterError):
    """Raised when a point lies outside the domain of a proposal set."""

    def __init__(self, message: str = "", *, point: object | None = None):
        super().__init__(message)
        self.point = point


class EstimatorValidityError(GMISError):
    """A weighting denominator vanished where the target is nonzero."""

    def __init__(self, message: str = "", *, point: object | None = None, value: float = 0.0):
        super().__init__(message)
        self.point = point
        self.value = value


class CapabilityError(GMISError):
    """Raised when an exact computation is refused because it is too large."""


class DivergenceError(GMISError):
    """Raised when a variance integral does not converge."""


class SingularityError(GMISError):
    """Zero pdf or zero eta fed to a weight recursion."""


class InternalInvariantError(GMISError):
    """An internal accumulator left its admissible range."""


class DeltaQueryError(GMISError):
    """Raised when a pdf is requested from a Dirac (specular) BSDF."""


class SceneParseError(GMISError):
    """Scene or lab file could not be parsed."""

    def __init__(self, message: str, *, line: int = 0, column: int = 0):
        where = f" at line {line}" if line else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class ImageIOError(GMISError):
    """Raised when an image cannot be read, written or compared."""


class ConfigurationError(GMISError):
    """Raised when a run is configured inconsistently (e.g. RMSE without reference)."""


class ImageShapeError(ImageIOError, ParameterError):
    """Two images compared or merged have different dimensions."""
