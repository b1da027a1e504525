"""Polya-Gamma distribution utilities: exact moments, samplers, and the
Laplace-transform identity used to validate the augmentation.

PG(1, c) draws use the alternating-series accept-reject with an
inverse-Gaussian/exponential proposal mixture; integer shapes are sums of
unit-shape draws.  Real-valued shapes fall back to the distribution's
sum-of-gammas representation, truncated with an additive mean correction.
"""

import math
from typing import NamedTuple

import numpy as np
from scipy.special import log_ndtr

from .errors import SamplerFailureError

_TRUNC = 0.64            # crossover point of the two series representations
_MAX_ATTEMPTS = 10**6    # total accept-reject proposals before giving up
_SERIES_TERMS = 200      # gamma-series truncation for non-integer shapes
_SMALL_C = 1e-4          # switch to the Taylor expansion of the mean below this


def pg_mean(b: float, c: float) -> float:
    """Mean of PG(b, c): (b/(2c)) tanh(c/2), with limit b/4 at c = 0.

    Even in c; a Taylor expansion avoids 0/0 cancellation for |c| < 1e-4.
    """
    if not b > 0:
        raise ValueError("shape b must be positive")
    if abs(c) < _SMALL_C:
        return b * (0.25 - c * c / 48.0)
    return b / (2.0 * c) * math.tanh(0.5 * c)


def pg_mean_array(b, c):
    """Vectorized pg_mean with an exact-sign guard for |c| > 30 where
    tanh(c/2) is 1 to machine precision."""
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    small = np.abs(c) < _SMALL_C
    large = np.abs(c) > 30.0
    c_safe = np.where(small, 1.0, c)
    mid = b / (2.0 * c_safe) * np.tanh(0.5 * c_safe)
    out = np.where(small, b * (0.25 - c * c / 48.0), mid)
    return np.where(large, b / (2.0 * np.abs(c_safe)), out)


def _series_coef(n, x):
    """n-th term of the alternating series for the tilted-Jacobi density,
    using the small-x (inverse-gaussian-like) or large-x (exponential-like)
    representation per element."""
    k = n + 0.5
    with np.errstate(divide="ignore"):
        small = np.pi * k * (2.0 / (np.pi * x)) ** 1.5 * np.exp(-2.0 * k * k / x)
        big = np.pi * k * np.exp(-0.5 * k * k * np.pi * np.pi * x)
    return np.where(x <= _TRUNC, small, big)


def _exp_branch_prob(z):
    """Probability that the proposal mixture picks the exponential tail."""
    t = _TRUNC
    fz = 0.125 * np.pi * np.pi + 0.5 * z * z
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = math.log(fz) + fz * t
    xb = x0 - z + log_ndtr(b)
    xa = x0 + z + log_ndtr(a)
    qdivp = 4.0 / np.pi * (math.exp(xb) + math.exp(xa))
    return 1.0 / (1.0 + qdivp)


def _trunc_inv_gauss(z, size, rng):
    """Inverse-Gaussian(1/z, 1) draws truncated to (0, TRUNC]; z >= 0."""
    t = _TRUNC
    out = np.empty(size)
    pending = np.arange(size)
    rounds = 0
    if z < 1.0 / t:
        # mean above the truncation point (including z = 0): rejection with
        # an inverse-chi-squared-style proposal tilted by exp(-z^2 X / 2)
        while pending.size:
            rounds += 1
            if rounds > _MAX_ATTEMPTS:
                raise SamplerFailureError("PG accept-reject iteration cap exceeded")
            m = pending.size
            e1 = rng.exponential(size=m)
            e2 = rng.exponential(size=m)
            ok = e1 * e1 <= 2.0 * e2 / t
            cand = t / (1.0 + t * e1) ** 2
            acc = ok & (rng.random(m) <= np.exp(-0.5 * z * z * cand))
            out[pending[acc]] = cand[acc]
            pending = pending[~acc]
        return out
    mu = 1.0 / z
    while pending.size:
        rounds += 1
        if rounds > _MAX_ATTEMPTS:
            raise SamplerFailureError("PG accept-reject iteration cap exceeded")
        m = pending.size
        y = rng.standard_normal(m) ** 2
        muy = mu * y
        cand = mu + 0.5 * mu * muy - 0.5 * mu * np.sqrt(4.0 * muy + muy * muy)
        flip = rng.random(m) > mu / (mu + cand)
        cand[flip] = mu * mu / cand[flip]
        good = cand <= t
        out[pending[good]] = cand[good]
        pending = pending[~good]
    return out


def _series_accept(x, rng):
    """Alternating-series squeeze: returns a boolean acceptance mask."""
    m = x.size
    s = _series_coef(0, x)
    y = rng.random(m) * s
    accept = np.zeros(m, dtype=bool)
    decided = np.zeros(m, dtype=bool)
    n = 0
    while not decided.all():
        n += 1
        if n > 1000:
            raise SamplerFailureError("PG series evaluation failed to terminate")
        idx = np.flatnonzero(~decided)
        coef = _series_coef(n, x[idx])
        if n % 2 == 1:
            s[idx] -= coef
            hit = y[idx] <= s[idx]
            accept[idx[hit]] = True
            decided[idx[hit]] = True
        else:
            s[idx] += coef
            miss = y[idx] > s[idx]
            decided[idx[miss]] = True
    return accept


def _pg1_draws(c, size, rng):
    """size independent PG(1, c) draws."""
    z = 0.5 * abs(c)
    fz = 0.125 * np.pi * np.pi + 0.5 * z * z
    p_exp = _exp_branch_prob(z)
    out = np.empty(size)
    pending = np.arange(size)
    rounds = 0
    while pending.size:
        rounds += 1
        if rounds > _MAX_ATTEMPTS:
            raise SamplerFailureError("PG accept-reject iteration cap exceeded")
        m = pending.size
        tail = rng.random(m) < p_exp
        x = np.empty(m)
        n_tail = int(tail.sum())
        if n_tail:
            x[tail] = _TRUNC + rng.exponential(size=n_tail) / fz
        if n_tail < m:
            x[~tail] = _trunc_inv_gauss(z, m - n_tail, rng)
        acc = _series_accept(x, rng)
        out[pending[acc]] = 0.25 * x[acc]
        pending = pending[~acc]
    return out


def _gamma_series_draws(b, c, size, rng, terms=_SERIES_TERMS):
    """Truncated sum-of-gammas representation for arbitrary shape b > 0.

    The analytic mean of the dropped tail is added back so expectations are
    exact at any truncation level.
    """
    k = np.arange(1, terms + 1)
    denom = (k - 0.5) ** 2 + c * c / (4.0 * np.pi * np.pi)
    scale = 1.0 / (2.0 * np.pi * np.pi)
    total = np.zeros(size)
    for d in denom:
        total += rng.gamma(b, size=size) / d
    total *= scale
    tail_mean = pg_mean(b, c) - b * scale * float(np.sum(1.0 / denom))
    return total + tail_mean


def sample_pg_many(b, c, size, rng, terms=_SERIES_TERMS):
    """size independent PG(b, c) draws.

    Integer b: sums of b unit-shape accept-reject draws.  Non-integer b:
    truncated gamma series with additive tail-mean correction.
    """
    if not b > 0:
        raise ValueError("shape b must be positive")
    if float(b).is_integer():
        bi = int(b)
        flat = _pg1_draws(c, size * bi, rng)
        return flat.reshape(size, bi).sum(axis=1)
    return _gamma_series_draws(float(b), float(c), size, rng, terms=terms)


def sample_pg(b: float, c: float, rng) -> float:
    """One PG(b, c) draw."""
    return float(sample_pg_many(b, c, 1, rng)[0])


class LaplacePair(NamedTuple):
    lhs: float
    rhs: float
    mc_se: float


def pg_laplace_lhs_rhs(a: float, b: float, psi: float, rng=None,
                       draws: int = 100_000) -> LaplacePair:
    """Both sides of the Gaussian-scale-mixture identity
    (e^psi)^a / (1+e^psi)^b = 2^-b e^{kappa psi} E[e^{-omega psi^2/2}],
    omega ~ PG(b, 0), kappa = a - b/2.

    The left side is closed form; the right side is Monte Carlo with its
    standard error.  Validation helper, not used in any hot path.
    """
    if not b > 0:
        raise ValueError("shape b must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    sp = psi + math.log1p(math.exp(-psi)) if psi > 0 else math.log1p(math.exp(psi))
    lhs = math.exp(a * psi - b * sp)
    omega = sample_pg_many(b, 0.0, draws, rng)
    vals = np.exp(-0.5 * omega * psi * psi)
    front = math.exp(-b * math.log(2.0) + (a - 0.5 * b) * psi)
    rhs = front * float(vals.mean())
    se = front * float(vals.std(ddof=1)) / math.sqrt(draws)
    return LaplacePair(lhs=lhs, rhs=rhs, mc_se=se)
