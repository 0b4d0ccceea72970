"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent or invalid sampler/model/solver configuration."""


class NumericError(ArithmeticError):
    """A numeric quantity left its valid domain (NaN, overflow, ...)."""


class DegenerateWeightsError(NumericError):
    """Every proposal weight vanished; no selection distribution exists."""


class UndefinedDensityError(NumericError):
    """A density ratio was requested where the denominator density is zero."""


class DivergenceError(RuntimeError):
    """Trajectory integration blew up.

    The ``step_index`` attribute records the palindromic sub-step at which
    the blow-up was detected.
    """

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index
