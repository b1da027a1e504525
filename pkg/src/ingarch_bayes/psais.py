"""Pareto-smoothed adaptive importance sampling.

Draws come from the same state-dependent Gaussian family used by the MH
sampler, with the conditioning center moved only on uphill posterior moves.
Raw self-normalized ratios are stabilized by replacing the largest ones with
fitted generalized-Pareto quantiles; the fitted tail shape doubles as a
reliability diagnostic.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTailError
from .mh import MhConfig, PriorSpec, _build_bundle
from .model import CountSeries, ModelSpec, ParamVector, check_stationarity, \
    log_likelihood
from .errors import NumericalOverflowError
from .proposal import GaussianProposal, proposal_logpdf, sample_proposal

_MIN_TAIL = 5


@dataclass(frozen=True)
class GpdFit:
    """Generalized-Pareto tail fit: shape k_hat, scale sigma_hat, the
    threshold the exceedances were measured from, and their count."""

    k_hat: float
    sigma_hat: float
    location_u: float
    m: int


@dataclass(frozen=True)
class PsaisConfig:
    """Importance-sampling settings.

    nb_tolerance defaults looser than the MH sampler's: importance weights
    need the proposal to match the posterior spread, and a slack
    negative-binomial match keeps the plug-in latent precision close to the
    Poisson curvature.  Tight tolerances give a proposal several times
    narrower than the posterior, which MH absorbs but IS does not (the tail
    diagnostic fires).
    """

    draws: int = 5_000
    seed: int = 0
    nb_tolerance: float = 0.25
    lambda0: float | None = None       # None: profile MLE value
    center_init: tuple | None = None   # None: MLE, falling back to (0.1, 0.1, 0.1)
    gpd_fit: str = "profile"           # "profile" | "ml"
    overwrite_draws: bool = False      # literal center-overwrite bookkeeping

    def __post_init__(self):
        if self.draws < 25:
            raise ValueError("need at least 25 draws for tail smoothing")
        if self.gpd_fit not in ("profile", "ml"):
            raise ValueError("gpd_fit must be 'profile' or 'ml'")


@dataclass
class PsaisResult:
    draws: np.ndarray              # (S, 3) coefficient draws used in the estimator
    raw_ratios: np.ndarray         # (S,) ratios scaled by exp(-log_ratio_shift)
    smoothed_weights: np.ndarray   # (S,) normalized, sums to 1
    gpd: GpdFit | None
    khat_flag: bool
    estimate: np.ndarray
    lambda0_draws: np.ndarray      # (S,) constant companion value
    centers: np.ndarray            # (S, 3) conditioning center per draw
    weighted_se: np.ndarray
    ess: float                     # 1 / sum(w^2), an IS effective sample size
    log_ratio_shift: float         # max log ratio subtracted before exponentiation
    smoothing_degenerate: bool = False


def _unnormalized_log_posterior(theta, spec, prior, x, lambda0):
    vtheta = ParamVector(float(theta[0]), float(theta[1]), float(theta[2]),
                         lambda0)
    if not check_stationarity(spec, vtheta):
        return -math.inf
    try:
        ll = log_likelihood(spec, vtheta, x)
    except NumericalOverflowError:
        return -math.inf
    return ll + prior.theta_prior.logpdf(vtheta.theta)


def raw_log_ratio(theta_s, spec, prior: PriorSpec, x: CountSeries,
                  center_proposal: GaussianProposal, lambda0: float) -> float:
    """log of the importance ratio against the proposal actually used."""
    lp = _unnormalized_log_posterior(theta_s, spec, prior, x, lambda0)
    if lp == -math.inf:
        return -math.inf
    return lp - proposal_logpdf(center_proposal, theta_s)


def raw_ratio(theta_s, spec, prior: PriorSpec, x: CountSeries,
              center_proposal: GaussianProposal, lambda0: float) -> float:
    """Unnormalized posterior over proposal density; zero outside the
    stationarity region.  Prefer raw_log_ratio for long series, where the
    ratio under- or overflows in linear scale."""
    lr = raw_log_ratio(theta_s, spec, prior, x, center_proposal, lambda0)
    return math.exp(lr) if lr != -math.inf else 0.0


def uphill_update(center, candidate, spec, prior: PriorSpec, x: CountSeries,
                  lambda0: float):
    """Keep the candidate as the new center only on a strict posterior
    improvement; ties and invalid candidates retain the old center."""
    lp_cand = _unnormalized_log_posterior(candidate, spec, prior, x, lambda0)
    lp_cent = _unnormalized_log_posterior(center, spec, prior, x, lambda0)
    return np.asarray(candidate, dtype=float) if lp_cand > lp_cent \
        else np.asarray(center, dtype=float)


def _gpd_fit_profile(y):
    """Quasi-Bayesian profile estimator for the GPD shape and scale.

    Profiles the likelihood over a grid of reparameterized slopes, weights
    grid points by profile likelihood, and shrinks the shape toward 0.5 with
    a weak prior; stable down to very small tail sample sizes.
    """
    y = np.sort(np.asarray(y, dtype=float))
    n = y.size
    prior_scale = 3.0
    prior_k_weight = 10.0
    m_grid = 30 + int(math.sqrt(n))
    quart = y[int(n / 4 + 0.5) - 1]
    if not (y[-1] > 0 and quart > 0):
        raise DegenerateTailError("exceedances do not have usable spread")
    b = 1.0 - np.sqrt(m_grid / (np.arange(1, m_grid + 1) - 0.5))
    b = b / (prior_scale * quart) + 1.0 / y[-1]
    # profile shape at each slope, in manageable chunks
    k = np.empty(m_grid)
    chunk = 64
    for i in range(0, m_grid, chunk):
        k[i:i + chunk] = np.mean(np.log1p(-b[i:i + chunk, None] * y), axis=1)
    log_lik = n * (np.log(-b / k) - k - 1.0)
    # overflowing exp means a negligible weight; the 1/inf -> 0 limit is right
    with np.errstate(over="ignore"):
        weights = 1.0 / np.exp(log_lik - log_lik[:, None]).sum(axis=1)
    good = weights >= 10.0 * np.finfo(float).eps
    weights, b = weights[good] / weights[good].sum(), b[good]
    b_post = float(np.sum(b * weights))
    k_post = float(np.mean(np.log1p(-b_post * y)))
    sigma = -k_post / b_post
    k_hat = (n * k_post + prior_k_weight * 0.5) / (n + prior_k_weight)
    return float(k_hat), float(sigma)


def _gpd_fit_ml(y):
    from scipy.stats import genpareto
    k_hat, _, sigma = genpareto.fit(np.asarray(y, dtype=float), floc=0.0)
    return float(k_hat), float(sigma)


def fit_gpd(exceedances, location: float = 0.0, method: str = "profile") -> GpdFit:
    """Fit a generalized Pareto distribution to threshold exceedances.

    The caller supplies the threshold; exceedances are the positive excesses
    above it.  Raises DegenerateTailError when they carry no spread.
    """
    y = np.asarray(exceedances, dtype=float)
    if y.size < _MIN_TAIL:
        raise ValueError(f"need at least {_MIN_TAIL} exceedances")
    if float(np.ptp(y)) < np.finfo(float).tiny:
        raise DegenerateTailError("all exceedances are equal")
    if method == "profile":
        k_hat, sigma = _gpd_fit_profile(y)
    elif method == "ml":
        k_hat, sigma = _gpd_fit_ml(y)
    else:
        raise ValueError("method must be 'profile' or 'ml'")
    if not sigma > 0:
        raise DegenerateTailError("tail fit produced a non-positive scale")
    return GpdFit(k_hat=k_hat, sigma_hat=sigma, location_u=float(location),
                  m=int(y.size))


def gpd_quantile(p, fit: GpdFit):
    """Inverse CDF of the fitted GPD (location included)."""
    p = np.asarray(p, dtype=float)
    if fit.k_hat == 0.0:
        return fit.location_u - fit.sigma_hat * np.log1p(-p)
    return fit.location_u + fit.sigma_hat * np.expm1(
        -fit.k_hat * np.log1p(-p)) / fit.k_hat


def tail_size(n_draws: int) -> int:
    """Number of top ratios replaced: floor(min(0.2 S, 3 sqrt(S)))."""
    return int(math.floor(min(0.2 * n_draws, 3.0 * math.sqrt(n_draws))))


def pareto_smooth(ratios, method: str = "profile"):
    """Replace the largest M ratios with capped GPD quantiles.

    Returns (smoothed ratios in the original order, GpdFit or None).  A
    degenerate tail (no spread among exceedances) leaves the input unchanged
    and returns None with a warning.
    """
    r = np.asarray(ratios, dtype=float)
    s = r.size
    if s < 25:
        raise ValueError("need at least 25 ratios")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("ratios must be finite and non-negative")
    m = tail_size(s)
    order = np.argsort(r, kind="stable")
    u = r[order[s - m - 1]]
    exceed = r[order[s - m:]] - u
    out = r.copy()
    try:
        fit = fit_gpd(exceed, location=u, method=method)
    except DegenerateTailError:
        warnings.warn("degenerate importance-ratio tail; smoothing skipped")
        return out, None
    z = np.arange(1, m + 1)
    smoothed = np.minimum(gpd_quantile((z - 0.5) / m, fit), r.max())
    out[order[s - m:]] = smoothed
    return out, fit


def khat_threshold(n_draws: int) -> float:
    """Reliability cutoff min(1 - 1/log10(S), 0.7)."""
    if n_draws < 10:
        raise ValueError("threshold defined for at least 10 draws")
    return min(1.0 - 1.0 / math.log10(n_draws), 0.7)


def psais_run(spec: ModelSpec, prior: PriorSpec, config: PsaisConfig,
              x: CountSeries, h=None) -> PsaisResult:
    """Adaptive importance sampling run returning smoothed weights, the tail
    diagnostic, and the weighted estimate of h (default: identity)."""
    rng = np.random.default_rng(config.seed)
    lambda0 = config.lambda0
    center = None if config.center_init is None \
        else np.asarray(config.center_init, dtype=float)
    if lambda0 is None or center is None:
        mle_center, mle_lambda0 = _profile_center(spec, x)
        if lambda0 is None:
            lambda0 = mle_lambda0
        if center is None:
            center = mle_center
    mh_cfg = MhConfig(iterations=2, burn_in=1, nb_tolerance=config.nb_tolerance)
    s_total = config.draws

    center_state = ParamVector(*center, lambda0)
    if not check_stationarity(spec, center_state):
        raise ValueError("initial center must be stationary")
    bundle = _build_bundle(spec, prior, mh_cfg, x, center_state)
    proposal = bundle.proposal
    if proposal is None:
        raise ValueError("proposal construction failed at the initial center")
    center_lp = _unnormalized_log_posterior(center, spec, prior, x, lambda0)

    draws = np.empty((s_total, 3))
    centers = np.empty((s_total, 3))
    log_ratios = np.empty(s_total)
    for s in range(s_total):
        theta_s = sample_proposal(proposal, rng)
        centers[s] = center
        lp = _unnormalized_log_posterior(theta_s, spec, prior, x, lambda0)
        log_ratios[s] = -math.inf if lp == -math.inf \
            else lp - proposal_logpdf(proposal, theta_s)
        if config.overwrite_draws and lp <= center_lp:
            draws[s] = center
        else:
            draws[s] = theta_s
        if lp > center_lp:
            center = np.asarray(theta_s, dtype=float)
            center_lp = lp
            center_state = ParamVector(*center, lambda0)
            bundle = _build_bundle(spec, prior, mh_cfg, x, center_state)
            if bundle.proposal is not None:
                proposal = bundle.proposal

    finite = np.isfinite(log_ratios)
    if not finite.any():
        raise ValueError("no draw landed in the posterior support")
    shift = float(log_ratios[finite].max())
    ratios = np.where(finite, np.exp(log_ratios - shift), 0.0)
    smoothed, gpd = pareto_smooth(ratios, method=config.gpd_fit)
    total = smoothed.sum()
    weights = smoothed / total
    if h is None:
        h_vals = draws
    else:
        h_vals = np.asarray([np.atleast_1d(h(draws[s])) for s in range(s_total)],
                            dtype=float)
    estimate = weights @ h_vals
    centered = h_vals - estimate
    weighted_se = np.sqrt(np.sum((weights[:, None] * centered) ** 2, axis=0))
    ess = 1.0 / float(np.sum(weights ** 2))
    threshold = khat_threshold(s_total)
    khat_flag = bool(gpd is not None and gpd.k_hat > threshold)
    return PsaisResult(
        draws=draws, raw_ratios=ratios, smoothed_weights=weights, gpd=gpd,
        khat_flag=khat_flag, estimate=estimate,
        lambda0_draws=np.full(s_total, lambda0), centers=centers,
        weighted_se=weighted_se, ess=ess, log_ratio_shift=shift,
        smoothing_degenerate=gpd is None)


def _profile_center(spec, x):
    """MLE coefficients and initial intensity, falling back to the generic
    starting point when optimization fails."""
    from .mle import mle_fit
    from .errors import OptimizerError
    try:
        fitted, _ = mle_fit(spec, x, ParamVector(0.1, 0.1, 0.1, 1.0))
        return fitted.theta, fitted.lambda0
    except (OptimizerError, NumericalOverflowError, ValueError):
        return np.array([0.1, 0.1, 0.1]), 1.0
