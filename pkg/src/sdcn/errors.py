"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ParameterError(ValueError):
    """An argument is outside its valid range."""


class FormatError(ValueError):
    """An input file is malformed."""


class ConfigError(ValueError):
    """A configuration file or flag is invalid."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class DegenerateClusterError(ValueError):
    """A cluster received zero total soft assignment."""


class InfiniteDivergenceError(ValueError):
    """KL divergence is infinite because q is zero where p is not."""


class TrainingError(RuntimeError):
    """Training diverged; ``record`` holds the last diagnostic state."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
