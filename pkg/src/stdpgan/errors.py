"""Exception types shared across the package."""


class StdpganError(Exception):
    """Base class for package errors."""


class DimensionError(StdpganError, ValueError):
    """Shapes of operands do not agree."""


class NumericError(StdpganError, ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""


class TapeError(StdpganError, RuntimeError):
    """Misuse of a gradient tape (double backward, foreign tensors)."""


class ValidationError(StdpganError, ValueError):
    """Input data or configuration failed validation."""


class BudgetExhaustedError(StdpganError, RuntimeError):
    """The privacy budget does not allow another private step."""
