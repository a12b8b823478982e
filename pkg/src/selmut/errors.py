"""Exception types raised by the package."""


class SelmutError(Exception):
    """Base class for all package errors."""


class ScalingError(SelmutError, ValueError):
    pass


class OutOfRangeError(SelmutError, ValueError):
    pass


class DivergentMomentError(SelmutError, ValueError):
    """Exponential moment requested at |a| >= 1, where the integral is infinite."""


class KernelError(SelmutError, ValueError):
    pass


class InvalidRateError(SelmutError, ValueError):
    pass


class NegativeDensityError(SelmutError, ValueError):
    pass


class DomainError(SelmutError, ValueError):
    """Hopf-Cole transform of a non-positive density."""


class DensityOverflowError(SelmutError, OverflowError):
    pass


class SlopeBlowupError(SelmutError, FloatingPointError):
    """An exponent log K * (u_j - u_i) exceeded the overflow guard."""


class StiffnessError(SelmutError, RuntimeError):
    pass


class CFLError(SelmutError, ValueError):
    pass


class UnknownCheckError(SelmutError, KeyError):
    pass


class ConfigError(SelmutError, ValueError):
    """Configuration rejected; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SweepError(SelmutError, RuntimeError):
    """A sweep member failed; ``records`` keeps the members finished before it."""

    def __init__(self, message, records=()):
        self.records = list(records)
        super().__init__(message)
