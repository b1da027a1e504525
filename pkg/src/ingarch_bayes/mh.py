"""Metropolis-Hastings posterior sampler with the state-dependent Gaussian
proposal, calibrated by the exact Poisson likelihood.

Each iteration rebuilds the proposal at the current coefficients (shape
schedule, linearization, normal-equation solve), draws a candidate, and
accepts with the exact-likelihood ratio times the reverse/forward proposal
density ratio.  The initial intensity gets its own independence step with a
Gamma proposal.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import IllConditionedProposalError, NonStationaryError, \
    NumericalOverflowError
from .model import CountSeries, ModelSpec, ParamVector, check_stationarity, \
    intensity_path, log_likelihood
from .nb_approx import build_schedule
from .proposal import GaussianPrior, GaussianProposal, build_proposal, \
    linearize, proposal_logpdf, sample_proposal

FALLBACK_SCALE = 0.05   # spherical proposal sd used when the solve fails
DEFAULT_INIT = ParamVector(0.1, 0.1, 0.1, 1.0)


@dataclass(frozen=True)
class PriorSpec:
    """Coefficient prior (Gaussian, restricted to the stationarity region)
    plus a Gamma(shape, rate) prior on the initial intensity."""

    theta_prior: GaussianPrior
    lambda0_prior_shape: float = 2.0
    lambda0_prior_rate: float = 0.5

    def __post_init__(self):
        if not (self.lambda0_prior_shape > 0 and self.lambda0_prior_rate > 0):
            raise ValueError("Gamma hyperparameters must be positive")


@dataclass(frozen=True)
class MhConfig:
    iterations: int = 10_000
    burn_in: int = 5_000
    seed: int = 0
    nb_tolerance: float = 0.01
    lambda0_proposal: tuple | None = None   # (shape, rate); None = moment-matched
    include_prior_in_ratio: bool = True
    blocked: bool = False
    sample_lambda0: bool = True
    freeze_r_after: int | None = None
    loglinear_full_jacobian: bool = False
    anchor_warmup: int = 50   # deterministic mean-map iterations before sampling

    def __post_init__(self):
        if not self.burn_in < self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if not 0 < self.nb_tolerance < 1:
            raise ValueError("nb_tolerance must lie in (0, 1)")


@dataclass
class ChainResult:
    """Posterior draws with acceptance flags and seed provenance.

    Burn-in draws are retained in storage; burn_in records where inference
    should start.
    """

    draws: np.ndarray                 # (N, 4): alpha0, alpha1, beta1, lambda0
    accepted_theta: np.ndarray        # (N,) bool
    accepted_lambda0: np.ndarray      # (N,) bool
    seed: int
    burn_in: int
    r_schedule_summary: np.ndarray    # (N,) mean of r_t at each iteration
    fallback_count: int = 0

    @property
    def kept(self):
        return self.draws[self.burn_in:]


def _gamma_logpdf(x, shape, rate):
    if x <= 0:
        return -math.inf
    return (shape * math.log(rate) - math.lgamma(shape)
            + (shape - 1.0) * math.log(x) - rate * x)


def log_posterior(spec: ModelSpec, prior: PriorSpec, vtheta: ParamVector,
                  x: CountSeries) -> float:
    """Exact log-likelihood plus log priors; -inf outside the stationarity
    region or for non-positive initial intensity."""
    if not vtheta.lambda0 > 0:
        return -math.inf
    if not check_stationarity(spec, vtheta):
        return -math.inf
    try:
        ll = log_likelihood(spec, vtheta, x)
    except NumericalOverflowError:
        return -math.inf
    return (ll + prior.theta_prior.logpdf(vtheta.theta)
            + _gamma_logpdf(vtheta.lambda0, prior.lambda0_prior_shape,
                            prior.lambda0_prior_rate))


def moment_matched_lambda0_proposal(x: CountSeries):
    """Gamma(shape=2, rate=2/xbar): mean at the sample mean of the counts,
    relative sd about 0.71."""
    xbar = float(np.mean(x.values))
    if xbar <= 0:
        xbar = 1.0
    return (2.0, 2.0 / xbar)


@dataclass
class _StateBundle:
    """Everything the sampler derives from one (theta, lambda0) state."""

    loglik: float
    schedule: object
    proposal: GaussianProposal | None   # None when the solve failed
    r_mean: float


def _spherical(center_theta):
    return GaussianProposal(mean=np.asarray(center_theta, dtype=float),
                            cov=FALLBACK_SCALE ** 2 * np.eye(3))


def _build_bundle(spec, prior, config, x, state, fixed_r=None):
    path = intensity_path(spec, state, x)
    schedule = build_schedule(path, x, config.nb_tolerance, fixed_r=fixed_r)
    lin = linearize(spec, state, x,
                    full_jacobian=config.loglinear_full_jacobian)
    if x.n:
        xt = x.values[1:].astype(float)
        loglik = float(np.sum(xt * np.log(path.lam) - path.lam
                              - gammaln(xt + 1.0)))
    else:
        loglik = 0.0
    try:
        prop = build_proposal(lin, schedule, prior.theta_prior)
    except IllConditionedProposalError:
        prop = None
    r_mean = float(schedule.r.mean()) if schedule.r.size else 0.0
    return _StateBundle(loglik=loglik, schedule=schedule, proposal=prop,
                        r_mean=r_mean)


def acceptance_log_ratio(spec, prior, config, x, state, candidate,
                         fixed_r=None):
    """Log acceptance ratio for a theta move from state to candidate,
    assembled from the four log terms (plus the prior ratio when enabled).

    Exposed so tests can recompute the ratio independently; the sampler runs
    the same arithmetic.
    """
    fwd_bundle = _build_bundle(spec, prior, config, x, state, fixed_r=fixed_r)
    rev_bundle = _build_bundle(spec, prior, config, x, candidate,
                               fixed_r=fixed_r)
    fwd = fwd_bundle.proposal if fwd_bundle.proposal is not None \
        else _spherical(state.theta)
    rev = rev_bundle.proposal if rev_bundle.proposal is not None \
        else _spherical(candidate.theta)
    log_r = (rev_bundle.loglik - fwd_bundle.loglik
             + proposal_logpdf(rev, state.theta)
             - proposal_logpdf(fwd, candidate.theta))
    if config.include_prior_in_ratio:
        log_r += (prior.theta_prior.logpdf(candidate.theta)
                  - prior.theta_prior.logpdf(state.theta))
    return log_r


def _theta_step(spec, prior, config, x, state, bundle, rng, fixed_r=None):
    """Joint update of the coefficient triple.

    Returns (state, accepted, proposal_used, bundle, used_fallback); the
    bundle for the returned state is reusable by the caller.
    """
    used_fallback = bundle.proposal is None
    fwd = bundle.proposal if bundle.proposal is not None else _spherical(state.theta)
    theta_star = sample_proposal(fwd, rng)
    candidate = state.with_theta(theta_star)
    if not check_stationarity(spec, candidate):
        return state, False, fwd, bundle, used_fallback
    try:
        cand_bundle = _build_bundle(spec, prior, config, x, candidate,
                                    fixed_r=fixed_r)
    except NumericalOverflowError:
        return state, False, fwd, bundle, used_fallback
    rev = cand_bundle.proposal if cand_bundle.proposal is not None \
        else _spherical(candidate.theta)
    used_fallback = used_fallback or cand_bundle.proposal is None
    log_r = (cand_bundle.loglik - bundle.loglik
             + proposal_logpdf(rev, state.theta)
             - proposal_logpdf(fwd, theta_star))
    if config.include_prior_in_ratio:
        log_r += (prior.theta_prior.logpdf(theta_star)
                  - prior.theta_prior.logpdf(state.theta))
    if math.log(rng.random()) < log_r:
        return candidate, True, fwd, cand_bundle, used_fallback
    return state, False, fwd, bundle, used_fallback


def mh_theta_step(state: ParamVector, spec: ModelSpec, prior: PriorSpec,
                  config: MhConfig, x: CountSeries, rng):
    """One update of the coefficient triple from a stationary state.

    Returns (new_state, accepted, proposal_used).  Candidates outside the
    stationarity region are rejected immediately; a failed proposal solve
    falls back to a spherical Gaussian for that step.
    """
    if not check_stationarity(spec, state):
        raise NonStationaryError("theta step requires a stationary state")
    bundle = _build_bundle(spec, prior, config, x, state)
    new_state, accepted, prop, _, _ = _theta_step(
        spec, prior, config, x, state, bundle, rng)
    return new_state, accepted, prop


def mh_lambda0_step(state: ParamVector, spec: ModelSpec, prior: PriorSpec,
                    config: MhConfig, x: CountSeries, rng,
                    proposal_params=None, current_loglik=None):
    """Independence MH update of the initial intensity with a Gamma proposal.

    Returns (new_lambda0, accepted).  The acceptance ratio combines the
    target ratio with the proposal-density ratio q(current)/q(candidate).
    """
    if not state.lambda0 > 0:
        raise ValueError("lambda0 must be positive")
    if proposal_params is None:
        proposal_params = config.lambda0_proposal \
            or moment_matched_lambda0_proposal(x)
    shape, rate = proposal_params
    lam_star = float(rng.gamma(shape, 1.0 / rate))
    if current_loglik is None:
        current_loglik = log_likelihood(spec, state, x)
    try:
        cand_loglik = log_likelihood(spec, state.with_lambda0(lam_star), x)
    except NumericalOverflowError:
        return state.lambda0, False
    pr = prior
    log_r = (cand_loglik - current_loglik
             + _gamma_logpdf(lam_star, pr.lambda0_prior_shape,
                             pr.lambda0_prior_rate)
             - _gamma_logpdf(state.lambda0, pr.lambda0_prior_shape,
                             pr.lambda0_prior_rate)
             + _gamma_logpdf(state.lambda0, shape, rate)
             - _gamma_logpdf(lam_star, shape, rate))
    if math.log(rng.random()) < log_r:
        return lam_star, True
    return state.lambda0, False


def _conditional_1d(prop, i, other_idx, other_vals):
    """Univariate conditional N(mean, var) of component i given the others."""
    v_oo = prop.cov[np.ix_(other_idx, other_idx)]
    v_io = prop.cov[i, other_idx]
    sol = np.linalg.solve(v_oo, np.asarray(other_vals) - prop.mean[other_idx])
    mean = prop.mean[i] + v_io @ sol
    var = prop.cov[i, i] - v_io @ np.linalg.solve(v_oo, v_io)
    return float(mean), float(max(var, 1e-12))


def _conditional_2d(prop, idx, other_i, other_val):
    """Bivariate conditional of components idx given the remaining one."""
    v_oo = prop.cov[other_i, other_i]
    v_io = prop.cov[np.ix_(list(idx), [other_i])][:, 0]
    mean = prop.mean[list(idx)] + v_io * (other_val - prop.mean[other_i]) / v_oo
    cov = prop.cov[np.ix_(list(idx), list(idx))] - np.outer(v_io, v_io) / v_oo
    return mean, 0.5 * (cov + cov.T)


def _norm_logpdf(v, mean, var):
    return -0.5 * (math.log(2.0 * math.pi * var) + (v - mean) ** 2 / var)


def _mvn2_logpdf(v, mean, cov):
    chol = np.linalg.cholesky(cov)
    y = np.linalg.solve(chol, np.asarray(v) - mean)
    return -0.5 * (2.0 * math.log(2.0 * math.pi)
                   + 2.0 * float(np.sum(np.log(np.diag(chol)))) + float(y @ y))


def _theta_step_blocked(spec, prior, config, x, state, bundle, rng,
                        fixed_r=None):
    """Split update: alpha0 given (alpha1, beta1), then the pair given
    alpha0, each using the conditional of the same state-dependent Gaussian
    and the exact likelihood."""
    used_fallback = bundle.proposal is None
    accepted_any = False
    fwd_used = bundle.proposal if bundle.proposal is not None \
        else _spherical(state.theta)

    # alpha0 | (alpha1, beta1)
    prop = fwd_used
    others = np.array([1, 2])
    m, v = _conditional_1d(prop, 0, others, state.theta[others])
    a0_star = m + math.sqrt(v) * rng.standard_normal()
    cand = state.with_theta(np.array([a0_star, state.alpha1, state.beta1]))
    if check_stationarity(spec, cand):
        try:
            cand_bundle = _build_bundle(spec, prior, config, x, cand,
                                        fixed_r=fixed_r)
        except NumericalOverflowError:
            cand_bundle = None
        if cand_bundle is not None:
            rev_prop = cand_bundle.proposal if cand_bundle.proposal is not None \
                else _spherical(cand.theta)
            used_fallback |= cand_bundle.proposal is None
            mr, vr = _conditional_1d(rev_prop, 0, others, cand.theta[others])
            log_r = (cand_bundle.loglik - bundle.loglik
                     + _norm_logpdf(state.alpha0, mr, vr)
                     - _norm_logpdf(a0_star, m, v))
            if config.include_prior_in_ratio:
                log_r += (prior.theta_prior.logpdf(cand.theta)
                          - prior.theta_prior.logpdf(state.theta))
            if math.log(rng.random()) < log_r:
                state, bundle, accepted_any = cand, cand_bundle, True

    # (alpha1, beta1) | alpha0
    prop = bundle.proposal if bundle.proposal is not None else _spherical(state.theta)
    used_fallback |= bundle.proposal is None
    m2, c2 = _conditional_2d(prop, (1, 2), 0, state.alpha0)
    try:
        chol2 = np.linalg.cholesky(c2)
    except np.linalg.LinAlgError:
        chol2 = FALLBACK_SCALE * np.eye(2)
        c2 = chol2 @ chol2.T
    pair_star = m2 + chol2 @ rng.standard_normal(2)
    cand = state.with_theta(np.array([state.alpha0, pair_star[0], pair_star[1]]))
    if check_stationarity(spec, cand):
        try:
            cand_bundle = _build_bundle(spec, prior, config, x, cand,
                                        fixed_r=fixed_r)
        except NumericalOverflowError:
            cand_bundle = None
        if cand_bundle is not None:
            rev_prop = cand_bundle.proposal if cand_bundle.proposal is not None \
                else _spherical(cand.theta)
            used_fallback |= cand_bundle.proposal is None
            mr2, cr2 = _conditional_2d(rev_prop, (1, 2), 0, cand.alpha0)
            try:
                log_rev = _mvn2_logpdf(state.theta[1:], mr2, cr2)
            except np.linalg.LinAlgError:
                log_rev = -math.inf
            log_r = (cand_bundle.loglik - bundle.loglik
                     + log_rev - _mvn2_logpdf(pair_star, m2, c2))
            if config.include_prior_in_ratio:
                log_r += (prior.theta_prior.logpdf(cand.theta)
                          - prior.theta_prior.logpdf(state.theta))
            if math.log(rng.random()) < log_r:
                state, bundle, accepted_any = cand, cand_bundle, True
    return state, accepted_any, fwd_used, bundle, used_fallback


def warm_up_anchor(spec, prior, config, x, init: ParamVector,
                   max_steps=None) -> ParamVector:
    """Deterministically iterate the proposal mean map from init, halving
    steps that leave the stationarity region.

    Far from the posterior mode the data-driven proposal mean overshoots
    while its covariance stays narrow, so the reverse proposal density can
    make escape from a cold start astronomically unlikely.  Walking the
    anchor to a fixed point first leaves the transition kernel (and hence
    the target) untouched; it only improves the starting point.
    """
    if max_steps is None:
        max_steps = config.anchor_warmup
    state = init
    for _ in range(max_steps):
        try:
            bundle = _build_bundle(spec, prior, config, x, state)
        except NumericalOverflowError:
            break
        if bundle.proposal is None:
            break
        target = bundle.proposal.mean
        step = target - state.theta
        cand = state.with_theta(target)
        for _ in range(40):
            if check_stationarity(spec, cand):
                break
            step *= 0.5
            cand = state.with_theta(state.theta + step)
        else:
            break
        if float(np.max(np.abs(cand.theta - state.theta))) < 1e-10:
            state = cand
            break
        state = cand
    return state


def run_chain(spec: ModelSpec, prior: PriorSpec, config: MhConfig,
              x: CountSeries, init: ParamVector = DEFAULT_INIT) -> ChainResult:
    """Run the full sampler: a coefficient update followed by an
    initial-intensity update per iteration, deterministic given the seed."""
    if not check_stationarity(spec, init):
        raise NonStationaryError("initial state must be stationary")
    if not init.lambda0 > 0:
        raise ValueError("initial lambda0 must be positive")
    if config.anchor_warmup > 0:
        init = warm_up_anchor(spec, prior, config, x, init)
    rng = np.random.default_rng(config.seed)
    lam0_prop = config.lambda0_proposal or moment_matched_lambda0_proposal(x)
    n_iter = config.iterations
    draws = np.empty((n_iter, 4))
    acc_theta = np.zeros(n_iter, dtype=bool)
    acc_l0 = np.zeros(n_iter, dtype=bool)
    r_summary = np.empty(n_iter)
    fallback_count = 0

    state = init
    fixed_r = None
    bundle = _build_bundle(spec, prior, config, x, state)
    step = _theta_step_blocked if config.blocked else _theta_step
    for k in range(n_iter):
        if (config.freeze_r_after is not None and fixed_r is None
                and k >= config.freeze_r_after):
            fixed_r = bundle.schedule.r.copy()
        state, accepted, _, bundle, fb = step(
            spec, prior, config, x, state, bundle, rng, fixed_r=fixed_r)
        acc_theta[k] = accepted
        fallback_count += int(fb)
        if config.sample_lambda0:
            new_l0, l0_acc = mh_lambda0_step(
                state, spec, prior, config, x, rng,
                proposal_params=lam0_prop, current_loglik=bundle.loglik)
            acc_l0[k] = l0_acc
            if l0_acc:
                state = state.with_lambda0(new_l0)
                bundle = _build_bundle(spec, prior, config, x, state,
                                       fixed_r=fixed_r)
        draws[k] = state.full
        r_summary[k] = bundle.r_mean
    return ChainResult(draws=draws, accepted_theta=acc_theta,
                       accepted_lambda0=acc_l0, seed=config.seed,
                       burn_in=config.burn_in, r_schedule_summary=r_summary,
                       fallback_count=fallback_count)
