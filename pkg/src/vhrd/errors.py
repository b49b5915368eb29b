"""Exception types shared across the package."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap without meeting tolerance."""

    def __init__(self, message, *, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class PositivityError(RuntimeError):
    """A positivity-preserving operator produced negative entries."""


class StepRejected(RuntimeError):
    """A time step produced negative densities; retry with ``suggested_dt``."""

    def __init__(self, message, *, suggested_dt):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class ConfigError(ValueError):
    """Invalid scenario configuration."""
