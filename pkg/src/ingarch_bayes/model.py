"""Poisson INGARCH(1,1) models: links, intensity recursions, likelihood,
stationarity checks, and forward simulation.

Two response functions are supported.  The log-linear recursion drives the
log-intensity with transformed past counts and admits negative dependence;
the softplus recursion keeps the intensity scale linear while staying
positive.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import lfilter
from scipy.special import gammaln

from ._kernels import softplus_path
from .errors import NonStationaryError, NumericalOverflowError

# |log-intensity| beyond which exp() is numerically meaningless
LOG_INTENSITY_LIMIT = 700.0


class Link(Enum):
    LOG_LINEAR = "loglinear"
    SOFTPLUS = "softplus"


@dataclass(frozen=True)
class ModelSpec:
    """Link choice plus the softplus scale constant c (softplus only)."""

    link: Link
    softplus_scale: float = 1.0

    def __post_init__(self):
        if self.link is Link.SOFTPLUS and not self.softplus_scale > 0:
            raise ValueError("softplus_scale must be > 0")


@dataclass(frozen=True)
class ParamVector:
    """Recursion coefficients (alpha0, alpha1, beta1) and initial intensity.

    lambda0 must be positive wherever a recursion is seeded from it; the
    constructor does not reject non-positive values so that posterior code
    can score them as impossible rather than crash.
    """

    alpha0: float
    alpha1: float
    beta1: float
    lambda0: float = 1.0

    @property
    def theta(self):
        return np.array([self.alpha0, self.alpha1, self.beta1])

    @property
    def full(self):
        return np.array([self.alpha0, self.alpha1, self.beta1, self.lambda0])

    def with_theta(self, theta):
        return ParamVector(float(theta[0]), float(theta[1]), float(theta[2]),
                           self.lambda0)

    def with_lambda0(self, lambda0):
        return ParamVector(self.alpha0, self.alpha1, self.beta1, float(lambda0))


class CountSeries:
    """A non-negative integer series x_0..x_n; x_0 seeds the recursion and
    t = 1..n are the modeled observations.

    A length-1 series (n = 0) is accepted for prior-only computations.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.asarray(values)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("count series must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(arr.astype(float))):
            raise ValueError("count series contains non-finite entries")
        if np.any(arr < 0) or np.any(arr != np.floor(arr)):
            raise ValueError("count series entries must be non-negative integers")
        self.values = arr.astype(np.int64)

    @property
    def n(self):
        """Number of modeled observations (series length minus the seed)."""
        return self.values.size - 1

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        return isinstance(other, CountSeries) and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class IntensityPath:
    """Intensities lam_1..lam_n with their linear predictors eta_1..eta_n.

    For the log-linear link eta holds the log-intensities; for softplus it
    holds the pre-link argument.
    """

    lam: np.ndarray
    eta: np.ndarray


def check_stationarity(spec: ModelSpec, params: ParamVector) -> bool:
    """True iff the coefficient triple lies inside the link's stationarity
    region (boundaries excluded).

    Log-linear: |a1| < 1 together with either b1 > 0 and |a1 + b1| < 1, or
    b1 < 0 and |a1|*|a1 + b1| < 1.  The seam b1 = 0 (intensity decoupled from
    past counts) is treated as stationary whenever |a1| < 1; it is the shared
    limit of both branches.  Softplus: a0 > 0, a1 >= 0, b1 >= 0, a1 + b1 < 1.
    """
    a0, a1, b1 = params.alpha0, params.alpha1, params.beta1
    if spec.link is Link.LOG_LINEAR:
        if not abs(a1) < 1.0:
            return False
        if b1 > 0.0:
            return abs(a1 + b1) < 1.0
        if b1 < 0.0:
            return abs(a1) * abs(a1 + b1) < 1.0
        return True
    return a0 > 0.0 and a1 >= 0.0 and b1 >= 0.0 and (a1 + b1) < 1.0


def intensity_path(spec: ModelSpec, params: ParamVector, x: CountSeries) -> IntensityPath:
    """Deterministic intensity path of length n given the observed series.

    The log-linear recursion is seeded with nu_0 = log(lambda0); softplus
    seeds lambda0 directly.  Raises NumericalOverflowError (naming the index)
    if the recursion leaves the representable range.
    """
    if not params.lambda0 > 0:
        raise ValueError("lambda0 must be positive")
    n = x.n
    if n == 0:
        return IntensityPath(np.empty(0), np.empty(0))
    xv = x.values
    if spec.link is Link.LOG_LINEAR:
        drive = params.alpha0 + params.beta1 * np.log1p(xv[:-1].astype(float))
        nu0 = np.log(params.lambda0)
        nu, _ = lfilter([1.0], [1.0, -params.alpha1], drive,
                        zi=np.array([params.alpha1 * nu0]))
        bad = np.abs(nu) > LOG_INTENSITY_LIMIT
        if bad.any():
            t = int(np.argmax(bad)) + 1
            raise NumericalOverflowError(
                f"log-intensity overflow at t={t} (|nu|>{LOG_INTENSITY_LIMIT:g})", t=t)
        return IntensityPath(np.exp(nu), nu)
    lam, eta, bad_t = softplus_path(params.alpha0, params.alpha1, params.beta1,
                                    params.lambda0, spec.softplus_scale,
                                    xv[:-1].astype(float))
    if bad_t:
        raise NumericalOverflowError(
            f"intensity recursion produced a non-finite or zero value at t={bad_t}",
            t=bad_t)
    return IntensityPath(lam, eta)


def log_likelihood(spec: ModelSpec, params: ParamVector, x: CountSeries) -> float:
    """Exact Poisson log-likelihood sum_t [x_t log lam_t - lam_t - log(x_t!)].

    Includes the full mass-function constant, so values are comparable
    across models and usable for predictive-density scoring.
    """
    if x.n == 0:
        return 0.0
    path = intensity_path(spec, params, x)
    xt = x.values[1:].astype(float)
    if spec.link is Link.LOG_LINEAR:
        log_lam = path.eta
    else:
        log_lam = np.log(path.lam)
    return float(np.sum(xt * log_lam - path.lam - gammaln(xt + 1.0)))


def simulate(spec: ModelSpec, params: ParamVector, n: int, seed: int) -> CountSeries:
    """Draw x_0..x_n from the model; x_0 ~ Poisson(lambda0), then each x_t is
    Poisson(lam_t) with lam_t computed from the realized past.

    Rejects non-stationary parameter vectors.  Reproducible given the seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not check_stationarity(spec, params):
        raise NonStationaryError(
            f"simulation requires stationary parameters, got "
            f"({params.alpha0}, {params.alpha1}, {params.beta1})")
    if not params.lambda0 > 0:
        raise ValueError("lambda0 must be positive")
    rng = np.random.default_rng(seed)
    a0, a1, b1 = params.alpha0, params.alpha1, params.beta1
    out = np.empty(n + 1, dtype=np.int64)
    out[0] = rng.poisson(params.lambda0)
    if spec.link is Link.LOG_LINEAR:
        nu = np.log(params.lambda0)
        for t in range(1, n + 1):
            nu = a0 + a1 * nu + b1 * np.log1p(out[t - 1])
            out[t] = rng.poisson(np.exp(nu))
    else:
        c = spec.softplus_scale
        lam = params.lambda0
        for t in range(1, n + 1):
            z = (a0 + a1 * lam + b1 * out[t - 1]) / c
            lam = c * (z + np.log1p(np.exp(-z))) if z > 0 else c * np.log1p(np.exp(z))
            out[t] = rng.poisson(lam)
    return CountSeries(out)
