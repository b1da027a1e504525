"""Maximum-likelihood baseline.

The stationarity region is mapped to an unconstrained space (tanh/logistic
for the log-linear region, a logistic simplex for softplus), optimized with
a quasi-Newton phase on numerically differentiated gradients, then polished
with a derivative-free simplex.
"""

import math

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalOverflowError, OptimizerError
from .model import CountSeries, Link, ModelSpec, ParamVector, \
    check_stationarity, log_likelihood

_EPS = 1e-6
_PENALTY = 1e12


def _softplus(u):
    return u + math.log1p(math.exp(-u)) if u > 0 else math.log1p(math.exp(u))


def _inv_softplus(v):
    return v + math.log(-math.expm1(-v)) if v > 20 else math.log(math.expm1(v))


def _sigmoid(u):
    return 1.0 / (1.0 + math.exp(-u)) if u >= 0 \
        else math.exp(u) / (1.0 + math.exp(u))


def _logit(p):
    return math.log(p / (1.0 - p))


def _from_unconstrained(u, link):
    if link is Link.LOG_LINEAR:
        # branch with positive feedback: s = a1+b1 in (-1,1), b1 in (0, s+1)
        s = math.tanh(u[1])
        b1 = (s + 1.0) * _sigmoid(u[2])
        a1 = s - b1
        return ParamVector(u[0], a1, b1, math.exp(u[3]))
    total = 1.0 + math.exp(u[1]) + math.exp(u[2])
    return ParamVector(_softplus(u[0]), math.exp(u[1]) / total,
                       math.exp(u[2]) / total, math.exp(u[3]))


def _to_unconstrained(params, link):
    lam0 = max(params.lambda0, 1e-8)
    if link is Link.LOG_LINEAR:
        s = min(max(params.alpha1 + params.beta1, -1.0 + _EPS), 1.0 - _EPS)
        q = params.beta1 / (s + 1.0)
        q = min(max(q, _EPS), 1.0 - _EPS)
        return np.array([params.alpha0, math.atanh(s), _logit(q),
                         math.log(lam0)])
    rest = 1.0 - params.alpha1 - params.beta1
    a1 = max(params.alpha1, _EPS)
    b1 = max(params.beta1, _EPS)
    rest = max(rest, _EPS)
    return np.array([_inv_softplus(max(params.alpha0, _EPS)),
                     math.log(a1 / rest), math.log(b1 / rest),
                     math.log(lam0)])


def mle_fit(spec: ModelSpec, x: CountSeries,
            init: ParamVector = ParamVector(0.1, 0.1, 0.1, 1.0),
            max_evals: int = 20_000):
    """Maximize the exact Poisson log-likelihood over coefficients and the
    initial intensity inside the stationarity region.

    Returns (ParamVector, log-likelihood); the returned point is interior by
    construction of the parameter map.  Raises OptimizerError (carrying the
    best point found) if neither optimization phase converges.

    For the log-linear link the search covers the positive-feedback branch
    of the stationarity region (beta1 > 0).
    """
    if not check_stationarity(spec, init):
        raise ValueError("init must be stationary")
    if x.n < 2:
        raise ValueError("need at least two modeled observations")

    def objective(u):
        if np.any(np.abs(u) > 60.0):
            return _PENALTY
        params = _from_unconstrained(u, spec.link)
        try:
            return -log_likelihood(spec, params, x)
        except (NumericalOverflowError, OverflowError):
            return _PENALTY

    u0 = _to_unconstrained(init, spec.link)
    phase1 = minimize(objective, u0, method="L-BFGS-B",
                      options={"maxfun": max_evals // 2})
    start = phase1.x if np.isfinite(phase1.fun) else u0
    phase2 = minimize(objective, start, method="Nelder-Mead",
                      options={"maxfev": max_evals // 2, "xatol": 1e-8,
                               "fatol": 1e-10})
    best_u = phase2.x if phase2.fun <= phase1.fun else phase1.x
    best_fun = min(phase2.fun, phase1.fun)
    params = _from_unconstrained(best_u, spec.link)
    if not (np.isfinite(best_fun) and best_fun < _PENALTY):
        raise OptimizerError("likelihood optimization failed to find a finite "
                             "optimum", best_params=params,
                             best_loglik=-best_fun)
    if not (phase1.success or phase2.success):
        raise OptimizerError("likelihood optimization did not converge",
                             best_params=params, best_loglik=-best_fun)
    return params, -best_fun
