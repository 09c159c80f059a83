"""Exception types shared across the package."""


class BiolearnError(Exception):
    """Base class for all library errors."""


class ShapeError(BiolearnError, ValueError):
    """Operand dimensions are incompatible."""


class ParameterError(BiolearnError, ValueError):
    """A parameter value is outside its documented domain."""


class FormatError(BiolearnError, ValueError):
    """A file does not conform to its declared format."""


class NumericError(BiolearnError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


class DegenerateInputError(BiolearnError, ValueError):
    """Input carries too little variation for the requested statistic."""
