"""
Exception hierarchy for hypmoce.

Every error raised on purpose by the library derives from ``HypMoceError`` and
carries the process exit code the CLI maps it to.
"""

from typing import Any, Optional


class HypMoceError(Exception):
    """Base class for all hypmoce errors."""

    exit_code = 1


class ConfigError(HypMoceError):
    """Invalid run configuration or synthetic spec."""

    exit_code = 2


class DataError(HypMoceError):
    """Malformed, inconsistent or empty dataset input."""

    exit_code = 2


class DimensionError(HypMoceError):
    """Vector or matrix shapes do not agree."""

    exit_code = 2


class GeometryError(HypMoceError):
    """Points or vectors do not live on the expected manifold."""

    exit_code = 2


class NumericError(HypMoceError):
    """Non-finite values reached a geometric operation."""

    exit_code = 2


class ParameterError(HypMoceError):
    """A layer parameter is outside its valid domain."""

    exit_code = 2


class DeltaError(HypMoceError):
    """Point cloud unsuitable for a δ-hyperbolicity estimate."""

    exit_code = 2


class VersionError(HypMoceError):
    """Unsupported checkpoint or dataset format version."""

    exit_code = 3


class ConvergenceError(HypMoceError):
    """An iterative solver stopped before meeting its tolerance."""

    exit_code = 4

    def __init__(self, message: str, last_iterate: Any = None, grad_norm: Optional[float] = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm


class TrainingError(HypMoceError):
    """Training produced a non-finite gradient or loss."""

    def __init__(self, message: str, parameter: Optional[str] = None):
        super().__init__(message)
        self.parameter = parameter
