"""Exception types shared across the package."""


class IngarchError(Exception):
    """Base class for all package-specific errors."""


class NumericalOverflowError(IngarchError):
    """An intensity recursion produced a non-finite or unusable value.

    Carries the 1-based time index at which the recursion broke down.
    """

    def __init__(self, message, t):
        super().__init__(message)
        self.t = t


class NonStationaryError(IngarchError):
    """A parameter vector outside the stationarity region was supplied
    where a stationary one is required."""


class IllConditionedProposalError(IngarchError):
    """The proposal covariance solve failed; carries a condition estimate."""

    def __init__(self, message, condition_estimate=float("inf")):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class SamplerFailureError(IngarchError):
    """An accept-reject sampler exceeded its iteration cap."""


class DegenerateTailError(IngarchError):
    """Tail fitting was requested on exceedances with no spread."""


class OptimizerError(IngarchError):
    """Likelihood optimization did not converge; carries best point found."""

    def __init__(self, message, best_params=None, best_loglik=None):
        super().__init__(message)
        self.best_params = best_params
        self.best_loglik = best_loglik


class ConfigError(IngarchError):
    """Invalid experiment configuration (CLI exit code 2)."""


class DataError(IngarchError):
    """Invalid input data file (CLI exit code 3)."""
