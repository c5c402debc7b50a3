"""Utility modules."""
from src.utils.exceptions import (
    ConfigurationError,
    DomainError,
    InfeasibleError,
    NoFeasibleStartError,
    SolverError,
    SpeedLimitError,
    ValidationError,
    ZeroRateError,
)

__all__ = [
    "ConfigurationError",
    "DomainError",
    "InfeasibleError",
    "NoFeasibleStartError",
    "SolverError",
    "SpeedLimitError",
    "ValidationError",
    "ZeroRateError",
]
