class JointSpecError(Exception):
    """Base class for all package errors."""


class ConfigError(JointSpecError, ValueError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class DataError(JointSpecError, ValueError):
    """Data or model evaluation problem (CLI exit code 3)."""


class DomainError(DataError):
    """Parameters or data outside the model's admissible domain."""


class SimulationError(DataError):
    """A simulated path left the numerically safe range."""


class EstimationError(DataError):
    """Fitting or influence computation failed."""


class StatisticError(DataError):
    """A statistic is undefined for the given marks."""
