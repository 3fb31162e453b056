"""Exception hierarchy shared by the library and the command line tool."""


class DriftFilterError(Exception):
    """Base class for all errors raised by :mod:`driftfilter`."""


class ConfigError(DriftFilterError, ValueError):
    """Invalid model parameters or configuration file.

    Parameters
    ----------
    message : str
        Human readable description.
    field : str, optional
        Dotted name of the offending field, e.g. ``"model.alpha"``.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericError(DriftFilterError, ArithmeticError):
    """A numerical routine failed (blow-up, factorization failure, ...)."""


class NotPSDError(NumericError):
    """A matrix expected to be positive semidefinite is not."""


class ConvergenceError(NumericError):
    """An iterative procedure did not reach its tolerance."""
