"""Exception hierarchy shared by samplers, estimators and the CLI."""


class ScaleMCError(Exception):
    """Base class for library errors."""


class ConfigError(ScaleMCError, ValueError):
    """Invalid configuration or arguments.

    ``fields`` lists every offending field so callers can report all of them
    at once rather than one per run.
    """

    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = list(fields or [])


class NumericalFault(ScaleMCError, ArithmeticError):
    """A run hit a numerical condition it cannot recover from."""


class InvalidBoundError(NumericalFault):
    """A thinning bound was found below the true event rate.

    Carries the offending time and the rate/bound pair so the faulty bound
    can be reproduced.
    """

    def __init__(self, t: float, rate: float, bound: float):
        super().__init__(
            f"thinning bound violated at t={t!r}: rate={rate!r} > bound={bound!r}"
        )
        self.t = t
        self.rate = rate
        self.bound = bound


class UnsupportedBoundError(ScaleMCError, ValueError):
    """The requested bound needs information the target does not provide."""


class DivergenceError(NumericalFault):
    """A discretised sampler escaped to infinity."""
