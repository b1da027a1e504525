"""Sequential recursion kernels.

The softplus intensity recursion cannot be vectorized (each step feeds on the
previous intensity), so the loops live here in a form numba can compile.  When
numba is unavailable the pure-Python versions run unchanged; results are
bit-identical either way.
"""

import math

import numpy as np

try:
    from numba import njit as _njit

    def _jit(fn):
        return _njit(cache=True)(fn)

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised only without numba
    def _jit(fn):
        return fn

    NUMBA_ENABLED = False


def _softplus_path(a0, a1, b1, lam0, c, x):
    """Intensity path lam_1..lam_n and linear predictors eta_1..eta_n
    for the softplus recursion lam_t = s_c(a0 + a1*lam_{t-1} + b1*x_{t-1}).

    Returns (lam, eta, bad_index); bad_index is the first 1-based t with a
    non-finite or non-positive intensity (0 when the path is clean).
    """
    n = x.shape[0]
    lam = np.empty(n)
    eta = np.empty(n)
    lam_prev = lam0
    for t in range(n):
        e = a0 + a1 * lam_prev + b1 * x[t]
        z = e / c
        if z > 0.0:
            val = c * (z + math.log1p(math.exp(-z)))
        else:
            val = c * math.log1p(math.exp(z))
        eta[t] = e
        lam[t] = val
        if not (val > 0.0 and math.isfinite(val)):
            return lam, eta, t + 1
        lam_prev = val
    return lam, eta, 0


def _softplus_path_jac(a0, a1, b1, lam0, c, x):
    """Softplus path plus the forward gradient recursion.

    h_t = s_c'(eta_t) * ((1, lam_{t-1}, x_{t-1}) + a1 * h_{t-1}) with h_0 = 0,
    J_t = h_t / lam_t (gradient of log lam_t), and offsets o_t chosen so that
    o_t + J_t . theta reproduces log lam_t at the expansion point.
    """
    n = x.shape[0]
    lam = np.empty(n)
    eta = np.empty(n)
    design = np.empty((n, 3))
    offsets = np.empty(n)
    h0 = 0.0
    h1 = 0.0
    h2 = 0.0
    lam_prev = lam0
    for t in range(n):
        xt = x[t]
        e = a0 + a1 * lam_prev + b1 * xt
        z = e / c
        if z > 0.0:
            ez = math.exp(-z)
            val = c * (z + math.log1p(ez))
            slope = 1.0 / (1.0 + ez)
        else:
            ez = math.exp(z)
            val = c * math.log1p(ez)
            slope = ez / (1.0 + ez)
        eta[t] = e
        lam[t] = val
        if not (val > 0.0 and math.isfinite(val)):
            return lam, eta, design, offsets, t + 1
        h0 = slope * (1.0 + a1 * h0)
        h1 = slope * (lam_prev + a1 * h1)
        h2 = slope * (xt + a1 * h2)
        j0 = h0 / val
        j1 = h1 / val
        j2 = h2 / val
        design[t, 0] = j0
        design[t, 1] = j1
        design[t, 2] = j2
        offsets[t] = math.log(val) - (j0 * a0 + j1 * a1 + j2 * b1)
        lam_prev = val
    return lam, eta, design, offsets, 0


softplus_path = _jit(_softplus_path)
softplus_path_jac = _jit(_softplus_path_jac)

# uncompiled references, kept importable for equivalence tests
softplus_path_py = _softplus_path
softplus_path_jac_py = _softplus_path_jac
