"""Exception types raised across the package."""


class FeatpoolError(Exception):
    """Base class for all package errors."""


class DataError(FeatpoolError):
    """Problem with input data (files, columns, values)."""


class EmptySeries(DataError):
    pass


class NonNumeric(DataError):
    def __init__(self, row: int, value: str):
        self.row = row
        self.value = value
        super().__init__(f"non-numeric value {value!r} at data row {row}")


class InsufficientHistory(DataError):
    pass


class NumericalError(FeatpoolError):
    """Optimizer failure or a non-finite quantity where a finite one is required."""


class GarchDegenerate(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class NonFiniteScore(NumericalError):
    pass


class DegenerateScale(NumericalError):
    pass


class ConfigError(FeatpoolError):
    """Invalid run configuration."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
