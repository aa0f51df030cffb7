"""Exception hierarchy shared by all modules."""


class GapFilterError(Exception):
    """Base class for errors raised by this package."""


class DimensionMismatchError(GapFilterError, ValueError):
    pass


class FrequencyRangeError(GapFilterError, ValueError):
    pass


class GridResolutionError(GapFilterError, ValueError):
    """The frequency grid is too coarse for the requested Fourier index."""


class NotPositiveSemidefiniteError(GapFilterError, ValueError):
    pass


class PatternError(GapFilterError, ValueError):
    """Invalid missing-observation pattern or functional support."""


class SingularDensityError(GapFilterError, ArithmeticError):
    """(F + G) is singular at grid nodes or the block operator is not positive definite."""


class InfeasibleClassError(GapFilterError, ValueError):
    """An admissible class has no member on the chosen cell partition."""


class ConfigError(GapFilterError, ValueError):
    """Malformed experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
