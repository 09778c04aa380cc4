"""Exception hierarchy shared across the package."""


class IndepTestError(Exception):
    pass


class DomainError(IndepTestError, ValueError):
    """Argument outside the domain of a numeric routine."""


class ShapeError(IndepTestError, ValueError):
    pass


class SampleSizeError(IndepTestError, ValueError):
    pass


class ConfigError(IndepTestError, ValueError):
    pass


class DataError(IndepTestError, ValueError):
    pass


class DegenerateDataError(DataError):
    """Data too degenerate for the requested computation (e.g. zero median distance)."""


class SchemaError(DataError):
    pass


class NumericError(IndepTestError, ArithmeticError):
    pass


class TrainingDivergenceError(NumericError):
    """Raised when an objective or intermediate becomes non-finite.

    ``op`` names the graph operation that produced the bad value and
    ``checkpoint`` holds the last parameter snapshot known to be finite
    (``None`` when raised outside of training).
    """

    def __init__(self, message, op=None, checkpoint=None):
        super().__init__(message)
        self.op = op
        self.checkpoint = checkpoint


class ThresholdUnavailableError(NumericError):
    pass


class GradientUnavailableError(NumericError):
    pass


class PermutationError(IndepTestError, RuntimeError):
    """A statistic failed while evaluating permutation ``index``."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


class InvalidPermutationError(IndepTestError, ValueError):
    pass
