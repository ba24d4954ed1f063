class InvalidArgumentError(ValueError):
    """Raised when an argument violates a documented precondition."""


class InstanceParseError(ValueError):
    """Raised when an instance file cannot be parsed.

    ``line`` is the 1-based line number of the offending line when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InfeasibleMarginalsError(ValueError):
    """Fleet capacity is smaller than total demand."""


class NumericError(ArithmeticError):
    """A non-finite value appeared during a numerical routine."""


class InfeasibleError(RuntimeError):
    """No capacity-feasible solution exists for the requested fleet."""


class GradientCheckError(AssertionError):
    """Analytic gradient disagrees with finite differences."""
