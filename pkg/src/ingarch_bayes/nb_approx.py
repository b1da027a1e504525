"""Negative-binomial matching of Poisson intensities.

For each time point the Poisson(lam) factor is approximated by a negative
binomial with shape r and success probability r/(lam+r).  The quality of the
match is controlled through a closed-form discrepancy bound which is driven
to a uniform tolerance by choosing r per time point.
"""

from dataclasses import dataclass

import numpy as np

from .model import CountSeries, IntensityPath

_BRACKET_LOW_FACTOR = 0.1
_BRACKET_HIGH_FACTOR = 1e12
_BISECT_REL_TOL = 1e-8


@dataclass(frozen=True)
class NbSchedule:
    """Per-time-point negative-binomial shapes and derived quantities.

    psi_t = log(lam_t) - log(r_t) is the logistic-scale predictor and
    kappa_t = (x_t - r_t)/2 the working residual.
    """

    r: np.ndarray
    tolerance: float
    psi: np.ndarray
    kappa: np.ndarray


_BELOW_ONE = float(np.nextafter(1.0, 0.0))


def discrepancy(lam: float, r: float) -> float:
    """Upper bound on the relative CDF error of the NB(r, r/(lam+r))
    approximation to Poisson(lam): 1 - exp(-lam) * (1 + lam/r)^r.

    Lies in [0, 1), decreases in r, and vanishes as r -> infinity.  Values
    that would round to 1.0 are clamped to the largest double below 1.
    """
    d = -float(np.expm1(-lam + r * np.log1p(lam / r)))
    return min(d, _BELOW_ONE)


def _discrepancy_vec(lam, r):
    return -np.expm1(-lam + r * np.log1p(lam / r))


def select_r_path(lam, d_max):
    """Vectorized select_r over an intensity array (bisection on log r)."""
    lam = np.asarray(lam, dtype=float)
    if lam.size == 0:
        return np.empty(0)
    lo = np.log(lam * _BRACKET_LOW_FACTOR)
    hi = np.log(lam * _BRACKET_HIGH_FACTOR + 1.0)
    # expand upward where even the top of the bracket is not tolerant enough
    for _ in range(32):
        bad = _discrepancy_vec(lam, np.exp(hi)) > d_max
        if not bad.any():
            break
        hi[bad] += np.log(10.0)
    # where the lower end already satisfies the tolerance the answer clamps there
    done_low = _discrepancy_vec(lam, np.exp(lo)) <= d_max
    span = hi - lo
    n_iter = int(np.ceil(np.log2(span.max() / _BISECT_REL_TOL))) + 1
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        ok = _discrepancy_vec(lam, np.exp(mid)) <= d_max
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    out = np.exp(hi)
    if done_low.any():
        out = np.where(done_low, lam * _BRACKET_LOW_FACTOR, out)
    return out


def select_r(lam: float, d_max: float) -> float:
    """Smallest r (relative precision 1e-8) with discrepancy(lam, r) <= d_max.

    A solution always exists because the discrepancy decreases to zero in r.
    If even the bottom of the search bracket (lam/10) meets the tolerance,
    the bracket edge is returned.
    """
    if not 0 < d_max < 1:
        raise ValueError("d_max must lie in (0, 1)")
    if not lam > 0:
        raise ValueError("lam must be positive")
    return float(select_r_path(np.array([lam]), d_max)[0])


def build_schedule(lambda_path: IntensityPath, x: CountSeries, d_max: float,
                   fixed_r=None) -> NbSchedule:
    """Per-t shapes r_t = select_r(lam_t, d_max) plus psi and kappa.

    fixed_r skips selection and reuses a previously computed shape array
    (psi and kappa are still recomputed against the supplied path).
    """
    lam = lambda_path.lam
    if x.n != lam.size:
        raise ValueError("intensity path and count series lengths differ")
    if fixed_r is not None:
        r = np.asarray(fixed_r, dtype=float)
        if r.size != lam.size:
            raise ValueError("fixed r schedule has wrong length")
    else:
        r = select_r_path(lam, d_max)
    xt = x.values[1:].astype(float)
    psi = np.log(lam) - np.log(r)
    kappa = 0.5 * (xt - r)
    return NbSchedule(r=r, tolerance=d_max, psi=psi, kappa=kappa)
