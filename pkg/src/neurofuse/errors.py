"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so every error raised by the
library on bad input or a numerical breakdown should derive from one of
the two leaf classes below.
"""


class NeurofuseError(Exception):
    """Base class for all package errors."""


class ValidationError(NeurofuseError, ValueError):
    """Input data violates a documented precondition."""

    def __init__(self, message: str, code: str = "invalid"):
        super().__init__(message)
        self.code = code


class NumericalError(NeurofuseError, ArithmeticError):
    """A computation diverged or is mathematically undefined for the input."""

    def __init__(self, message: str, code: str = "numerical"):
        super().__init__(message)
        self.code = code
