"""Exception hierarchy shared by the numerical modules and the CLI."""


class RkdeError(Exception):
    """Base class for all errors raised by this package."""


class InputError(RkdeError, ValueError):
    """Malformed arguments: wrong shapes, non-finite entries, off-simplex weights."""


class NumericalError(RkdeError, ArithmeticError):
    """A computation produced non-finite values or degenerate normalizers."""


class ConfigError(RkdeError, ValueError):
    """Invalid experiment configuration."""
