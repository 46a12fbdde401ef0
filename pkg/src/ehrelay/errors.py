"""Exception types shared across the analytical and simulation engines."""


class ConfigError(ValueError):
    """Raised for malformed, missing, or out-of-range configuration input."""


class StabilityError(RuntimeError):
    """The relay buffer has no stationary distribution (stability parameter <= 1).

    The closed-form buffer density and the energy-availability probability
    are undefined in this regime; callers must treat it as a distinct
    failure mode, not a numerical accident.
    """


class DegeneracyError(RuntimeError):
    """Inputs sit numerically on the stability boundary where the buffer
    exponent collapses to the trivial root."""


class NonConvergenceError(RuntimeError):
    """An iterative solve exhausted its iteration budget without meeting
    its tolerance."""
