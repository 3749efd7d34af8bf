"""Exception types shared across the package."""


class FlowPdeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FlowPdeError, ValueError):
    """Invalid configuration: bad dimensions, parameters, or family mismatch."""


class ShapeError(FlowPdeError, ValueError):
    """Operands live on incompatible grids or have mismatched shapes."""


class SolverError(FlowPdeError, RuntimeError):
    """An iterative solver failed to converge or produced non-finite values."""


class StateError(FlowPdeError, RuntimeError):
    """An operation was called in an invalid order (e.g. stale tape reuse)."""


class StageError(FlowPdeError, RuntimeError):
    """An experiment stage could not run (missing upstream artifact, etc.)."""
