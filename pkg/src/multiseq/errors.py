"""Exception hierarchy shared across the package."""


class TrialDesignError(Exception):
    """Base class for all package-specific errors."""


class InvalidCorrelationError(TrialDesignError):
    """A correlation matrix is not positive semidefinite (after one jitter pass)."""


class CalibrationError(TrialDesignError):
    """Boundary calibration could not bracket the target error rate."""


class InfeasibleDesignError(TrialDesignError):
    """No sample size within the allowed range reaches the required power."""


class ConfigError(TrialDesignError):
    """A run configuration failed validation; the message names the field."""
