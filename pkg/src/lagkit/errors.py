"""Shared exception types and the CLI exit-code contract."""


class InvalidArgumentError(ValueError):
    """Inputs violate a precondition (shape mismatch, bad range, bad config)."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value.

    ``index`` identifies the offending component (coordinate index, grid
    index, or integration step) when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateHessianWarning(UserWarning):
    """The velocity Hessian was rank deficient; minimum-norm solution returned."""


# Stable exit codes for scripting against the CLI.
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
