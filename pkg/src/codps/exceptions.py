"""Exception types raised across the package."""


class CodpsError(Exception):
    """Base class for package errors."""


class InvalidRangeError(CodpsError, ValueError):
    """A parameter is outside its admissible range."""


class DimensionError(CodpsError, ValueError):
    """Array shapes do not match the operator or prior."""


class IllPosedGuidanceError(CodpsError, ArithmeticError):
    """The likelihood covariance is singular at some coordinate."""


class SamplingDivergenceError(CodpsError, FloatingPointError):
    """A sampler produced a non-finite state."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step index {step}")


class SizeGuardError(CodpsError, MemoryError):
    """Refusing to materialize an operator that is too large."""


class ConfigError(CodpsError, ValueError):
    """Invalid experiment configuration."""
