"""Exception types shared across the package."""


class StochsurrError(Exception):
    """Base class for all package errors."""


class ConditioningError(StochsurrError):
    """Covariance factorization failed even at the maximum jitter level.

    Carries the indices and coordinates of the closest pair of sites,
    which is almost always the culprit.
    """

    def __init__(self, pair, distance, jitter):
        self.pair = pair
        self.distance = distance
        self.jitter = jitter
        i, j = pair
        super().__init__(
            f"covariance factorization failed at max jitter {jitter:g}; "
            f"closest site pair is ({i}, {j}) at scaled distance {distance:.3e}"
        )


class FitError(StochsurrError):
    """Every optimizer start failed. ``diagnostics`` has one entry per start."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or []
        super().__init__(message)


class CalibrationError(StochsurrError):
    """MCMC could not be initialized or made no progress."""


class SimulatorError(StochsurrError):
    """A testbed run failed; ``phase`` names the failing stage when known."""

    def __init__(self, message, phase=None, trace=None):
        self.phase = phase
        self.trace = trace
        super().__init__(message)
