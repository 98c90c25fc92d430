from typing import Optional


class HardyflowError(Exception):
    """Base class for every error raised by the hardyflow package."""


class DimensionError(HardyflowError):
    """Raised when the space dimension N is outside the supported range (N >= 3)."""


class ParameterRangeError(HardyflowError, ValueError):
    """Raised when a scalar argument lies outside its admissible interval."""


class ConfigurationError(HardyflowError):
    """Raised for malformed or unknown configuration keys and invalid mesh settings."""


class InfeasibleWeightError(HardyflowError):
    """Raised when a weight rho^a is not integrable on an element touching the origin."""


class NumericalError(HardyflowError):
    """Raised when a nonlinear evaluation produces NaN or infinite values."""


class ManifestError(HardyflowError):
    """Raised when a run manifest cannot be replayed (version, seal, overrides)."""


class ConvergenceError(HardyflowError):
    """
    Raised when an iterative solver exhausts its iteration cap.

    Attributes:
        residual (float | None): Last residual reached before giving up.
        iterations (int | None): Number of iterations performed.
    """

    def __init__(self, message: str, residual: Optional[float] = None, iterations: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations

    def __str__(self) -> str:
        base = super().__str__()
        if self.residual is None:
            return base
        return f"{base} (residuo={self.residual:.3e}, iterazioni={self.iterations})"


class OutputError(HardyflowError):
    """Raised when a result file of a run cannot be written."""
