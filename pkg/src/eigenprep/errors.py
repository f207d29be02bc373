"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid user input: malformed files, bad parameters, inconsistent flags."""


class NumericalError(ArithmeticError):
    """A computation could not be completed (suppressed branch, gapless spectrum, ...)."""


class SuppressionError(NumericalError):
    """The kept ancilla outcome has (numerically) zero probability."""


class VacuousBoundError(NumericalError):
    """A bound carries no information at the requested iteration."""
