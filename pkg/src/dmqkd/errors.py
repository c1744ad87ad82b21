"""Exception hierarchy. Each class maps onto one CLI exit code."""


class DmqkdError(Exception):
    exit_code = 3
    kind = "error"


class ConfigError(DmqkdError, ValueError):
    exit_code = 2
    kind = "config_error"


class NumericalError(DmqkdError, ArithmeticError):
    exit_code = 3
    kind = "numerical_error"


class CutoffError(NumericalError):
    """Fock cutoff too small for the requested coherent amplitudes."""

    kind = "cutoff_too_small"


class CalibrationError(NumericalError):
    kind = "calibration_failed"


class InfeasibleError(NumericalError):
    """No covariance block satisfies the uncertainty relation."""

    kind = "infeasible"
