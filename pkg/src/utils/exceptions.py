"""Custom exceptions."""


class ValidationError(Exception):
    """Raised when an input, scenario or config file fails validation."""
    pass


class ConfigurationError(Exception):
    """Raised when configuration is invalid."""
    pass


class DomainError(ValueError):
    """Raised when a formula is evaluated outside its domain."""
    pass


class ZeroRateError(Exception):
    """Raised when an active link has zero data rate."""
    pass


class SpeedLimitError(Exception):
    """Raised when a waypoint step needs more than one slot of flight time."""
    pass


class SolverError(Exception):
    """Raised when a numerical solve fails."""
    pass


class InfeasibleError(SolverError):
    """Raised when a problem that must have a solution has none."""
    pass


class NoFeasibleStartError(SolverError):
    """Raised when no feasible initial decision/trajectory can be built."""
    pass
