"""Shared exception types."""


class BandError(Exception):
    """Base class for every error this package raises on purpose."""


class DimensionError(BandError, ValueError):
    """Input has the wrong shape, or an index/interval is out of range."""


class ContractError(BandError, ValueError):
    """Input violates a documented precondition."""


class SingularMatrixError(BandError, ArithmeticError):
    """A pivot vanished: the system is exactly singular."""


class FitError(BandError, RuntimeError):
    """A least-squares fit has too few usable points or no decay to fit."""


class ConfigError(BandError, ValueError):
    """An experiment configuration failed validation."""
