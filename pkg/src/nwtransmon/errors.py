"""Exception and warning types raised across the package."""


class NwTransmonError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NwTransmonError, ValueError):
    """Invalid user input: parameters, configs, datasets."""


class NumericalError(NwTransmonError, ArithmeticError):
    """A numerical procedure failed to reach the requested accuracy."""


class FitError(NwTransmonError):
    """A fit could not produce a usable result."""


# qubit core
class NonPeriodicInput(ConfigError):
    pass


class CutoffTooSmall(NumericalError):
    pass


# device models
class FieldAboveCritical(ConfigError):
    pass


class StepUnderflow(NumericalError):
    pass


class NoInformation(ConfigError):
    pass


class BranchAmbiguity(ConfigError):
    pass


class OnResonance(ConfigError):
    pass


# noise / dephasing
class OutOfTable(ConfigError):
    pass


class QuadratureNotConverged(NumericalError):
    pass


class NoDecay(NumericalError):
    """Coherence did not drop to 1/e before the configured time horizon."""


# TLS simulation
class TraceTooShort(ConfigError):
    pass


class KneeOutOfBand(FitError):
    pass


# inference
class FitDiverged(FitError):
    pass


class IllConditioned(FitError):
    pass


class NoBracket(FitError):
    pass


class NonPhysicalRateWarning(UserWarning):
    pass


class PurcellDominated(UserWarning):
    pass


class BoundsHitWarning(UserWarning):
    pass
