"""Exception types raised across the package."""


class DomainError(ValueError):
    """Input lies outside the domain on which an operation is defined."""


class GeometryError(ValueError):
    """Degenerate geometry (zero chord, collapsed box axis, ...)."""


class BoundsError(ValueError):
    """Design vector outside its design-space bounds."""


class FittingError(RuntimeError):
    """Least-squares system could not be solved."""


class SolverError(RuntimeError):
    """Linear solver failure (singular collocation, Cholesky breakdown)."""


class NumericError(FloatingPointError):
    """Non-finite value produced during a computation."""


class StateError(RuntimeError):
    """Object used before it is ready (e.g. untrained generator)."""
