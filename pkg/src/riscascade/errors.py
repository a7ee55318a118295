"""Exception hierarchy shared by the simulator and the estimators."""


class RisError(Exception):
    """Base class for every error raised by :mod:`riscascade`."""


class InvalidDimensionError(RisError, ValueError):
    pass


class InvalidInputError(RisError, ValueError):
    pass


class ConfigurationError(RisError, ValueError):
    pass


class PilotBudgetError(ConfigurationError):
    """Stage I has fewer slots than common paths (V < L)."""


class DegenerateSceneError(RisError, ValueError):
    pass


class EstimationFailureError(RisError, RuntimeError):
    """AoA estimation could not find enough spectral peaks.

    The candidate peaks found (spatial frequency, power) are kept on
    ``peaks`` for diagnosis.
    """

    def __init__(self, message, peaks=()):
        super().__init__(message)
        self.peaks = list(peaks)


class NumericalRankError(RisError, ArithmeticError):
    pass


class DegenerateReferenceError(RisError, ArithmeticError):
    pass


class RecoveryFailureError(RisError, ArithmeticError):
    """Sparse recovery hit a rank-deficient support.

    ``support`` holds the (0-based) atoms selected before the failure.
    """

    def __init__(self, message, support=()):
        super().__init__(message)
        self.support = list(support)


class OracleFailureError(RisError, ArithmeticError):
    pass


class UndefinedMetricError(RisError, ValueError):
    pass
