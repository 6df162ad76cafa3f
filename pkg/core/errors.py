"""Exception hierarchy shared by the library and the CLI.

The CLI maps `InputError` to exit code 2 and `NumericalFailure` to exit code 3.
"""


class StcpError(Exception):
    """Base class for every error raised by this package."""


class InputError(StcpError, ValueError):
    """Invalid input: shapes, indices, parameters or violated preconditions."""


class ProblemFileError(InputError):
    """A problem file failed to parse or validate."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class NonsmoothObjectiveError(InputError):
    """A gradient was requested for the exact (unsmoothed) MIN residual."""


class NumericalFailure(StcpError, ArithmeticError):
    """Non-finite values appeared outside the documented clamping rules."""
