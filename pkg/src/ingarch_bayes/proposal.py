"""State-dependent Gaussian proposal construction.

The intensity path at the current parameter value is linearized on the
log scale (exactly for the log-linear link via plug-in design rows, to first
order for softplus via a forward gradient recursion), latent logistic-scale
variables are replaced by their conditional means, and the resulting
weighted-least-squares normal equations give the proposal mean and
covariance.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.signal import lfilter

from ._kernels import softplus_path_jac
from .errors import IllConditionedProposalError, NumericalOverflowError
from .model import CountSeries, Link, ModelSpec, ParamVector
from .nb_approx import NbSchedule
from .polya_gamma import pg_mean_array

_LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Linearization:
    """Per-t design rows J_t, offsets o_t, and the intensity path at the
    expansion point, satisfying o_t + J_t . theta = log lam_t(theta) there."""

    design_rows: np.ndarray
    offsets: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class GaussianPrior:
    """Gaussian prior N(b, B) on the coefficient triple."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        if self.mean.shape != (3,) or self.cov.shape != (3, 3):
            raise ValueError("prior must be 3-dimensional")
        try:
            cho = cho_factor(self.cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValueError("prior covariance must be positive definite") from exc
        object.__setattr__(self, "_precision", cho_solve(cho, np.eye(3)))
        object.__setattr__(self, "_logdet",
                           2.0 * float(np.sum(np.log(np.diag(cho[0])))))

    @property
    def precision(self):
        return self._precision

    def logpdf(self, theta):
        diff = np.asarray(theta, dtype=float) - self.mean
        quad = diff @ self._precision @ diff
        return -0.5 * (3.0 * _LOG2PI + self._logdet + quad)


@dataclass(frozen=True)
class GaussianProposal:
    """Proposal N(mean, cov); the Cholesky factor is computed eagerly so an
    SPD failure surfaces at construction."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        if not np.allclose(self.cov, self.cov.T, atol=1e-12):
            raise IllConditionedProposalError("proposal covariance not symmetric")
        try:
            chol = np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedProposalError(
                "proposal covariance not positive definite",
                condition_estimate=float(np.linalg.cond(self.cov))) from exc
        object.__setattr__(self, "chol", chol)


def linearize(spec: ModelSpec, theta_current: ParamVector, x: CountSeries,
              full_jacobian: bool = False) -> Linearization:
    """Design rows and offsets for log lam_t around the current parameters.

    Log-linear: plug-in rows (1, nu_{t-1}, log(1+x_{t-1})) with zero offsets,
    the design held fixed at the expansion point.  full_jacobian=True instead
    differentiates through the nu recursion.  Softplus: single forward
    recursion h_t = s_c'(eta_t) ((1, lam_{t-1}, x_{t-1}) + alpha1 h_{t-1}).
    """
    n = x.n
    if n == 0:
        return Linearization(np.empty((0, 3)), np.empty(0), np.empty(0))
    xv = x.values
    if spec.link is Link.LOG_LINEAR:
        drive = theta_current.alpha0 + theta_current.beta1 * np.log1p(
            xv[:-1].astype(float))
        nu0 = np.log(theta_current.lambda0)
        nu, _ = lfilter([1.0], [1.0, -theta_current.alpha1], drive,
                        zi=np.array([theta_current.alpha1 * nu0]))
        if np.any(np.abs(nu) > 700.0):
            t = int(np.argmax(np.abs(nu) > 700.0)) + 1
            raise NumericalOverflowError(f"log-intensity overflow at t={t}", t=t)
        prev_nu = np.concatenate(([nu0], nu[:-1]))
        base = np.column_stack([np.ones(n), prev_nu,
                                np.log1p(xv[:-1].astype(float))])
        if not full_jacobian:
            return Linearization(base, np.zeros(n), np.exp(nu))
        # J_t = d_t + alpha1 J_{t-1}; offsets restore nu_t at the expansion point
        rows = np.empty((n, 3))
        for j in range(3):
            rows[:, j], _ = lfilter([1.0], [1.0, -theta_current.alpha1],
                                    base[:, j], zi=np.array([0.0]))
        offsets = nu - rows @ theta_current.theta
        return Linearization(rows, offsets, np.exp(nu))
    lam, _, rows, offsets, bad_t = softplus_path_jac(
        theta_current.alpha0, theta_current.alpha1, theta_current.beta1,
        theta_current.lambda0, spec.softplus_scale, xv[:-1].astype(float))
    if bad_t:
        raise NumericalOverflowError(
            f"intensity recursion produced a non-finite or zero value at t={bad_t}",
            t=bad_t)
    return Linearization(rows, offsets, lam)


def build_proposal(lin: Linearization, schedule: NbSchedule,
                   prior: GaussianPrior) -> GaussianProposal:
    """Assemble N(mu, V) with V = (D' W D + B^-1)^-1 and
    mu = V (D' kappa_adj + B^-1 b).

    W is diagonal with the plug-in latent means
    w_t = ((r_t + x_t)/(2 psi_t)) tanh(psi_t / 2) and
    kappa_adj_t = w_t (log r_t - o_t) + (x_t - r_t)/2; the offset correction
    vanishes for the log-linear link where o_t = 0.
    """
    d = lin.design_rows
    if d.shape[0] != schedule.r.size:
        raise ValueError("linearization and schedule lengths differ")
    # shape r_t + x_t recovered from kappa_t = (x_t - r_t)/2
    b_shape = 2.0 * (schedule.kappa + schedule.r)
    w = pg_mean_array(b_shape, schedule.psi)
    kappa_adj = w * (np.log(schedule.r) - lin.offsets) + schedule.kappa
    a = d.T @ (w[:, None] * d) + prior.precision
    rhs = d.T @ kappa_adj + prior.precision @ prior.mean
    try:
        cho = cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedProposalError(
            "normal equations not positive definite",
            condition_estimate=float(np.linalg.cond(a))) from exc
    mean = cho_solve(cho, rhs)
    cov = cho_solve(cho, np.eye(3))
    cov = 0.5 * (cov + cov.T)
    return GaussianProposal(mean=mean, cov=cov)


def proposal_logpdf(prop: GaussianProposal, theta) -> float:
    """Exact multivariate normal log-density including the constant."""
    diff = np.asarray(theta, dtype=float) - prop.mean
    y = solve_triangular(prop.chol, diff, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(prop.chol))))
    return -0.5 * (3.0 * _LOG2PI + logdet + float(y @ y))


def sample_proposal(prop: GaussianProposal, rng) -> np.ndarray:
    """One draw mu + L z with z standard normal."""
    return prop.mean + prop.chol @ rng.standard_normal(3)
