"""Posterior summaries, convergence diagnostics, residuals, and forecast
metrics."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .mh import ChainResult
from .model import CountSeries, ModelSpec, ParamVector, intensity_path

PARAM_NAMES = ("alpha0", "alpha1", "beta1", "lambda0")


@dataclass(frozen=True)
class ForecastReport:
    mae: float
    rmse: float
    lpd: float


@dataclass(frozen=True)
class PosteriorSummary:
    """Per-parameter moments, quantiles and effective sample sizes over the
    post-burn-in draws, plus acceptance rates."""

    names: tuple
    mean: np.ndarray
    sd: np.ndarray
    q025: np.ndarray
    median: np.ndarray
    q975: np.ndarray
    ess: np.ndarray
    acceptance_rate: float
    acceptance_rate_lambda0: float = float("nan")

    def to_dict(self):
        out = {}
        for i, name in enumerate(self.names):
            out[name] = {
                "mean": float(self.mean[i]),
                "sd": float(self.sd[i]),
                "q2.5": float(self.q025[i]),
                "median": float(self.median[i]),
                "q97.5": float(self.q975[i]),
                "ess": float(self.ess[i]),
            }
        out["acceptance_rate"] = float(self.acceptance_rate)
        out["acceptance_rate_lambda0"] = float(self.acceptance_rate_lambda0)
        return out


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations rho_0..rho_max_lag with the biased (1/n)
    normalization; rho_0 = 1."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if not max_lag < n:
        raise ValueError("max_lag must be smaller than the series length")
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        raise ValueError("zero-variance series has no autocorrelation")
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    cov = np.fft.irfft(f * np.conj(f), nfft)[:max_lag + 1]
    return cov / cov[0]


def ess(chain_component) -> float:
    """Effective sample size N / (1 + 2 sum rho_k) with the initial
    monotone positive-pair truncation of the autocorrelation sum.

    A constant chain is degenerate: warns and returns 0.  Capped at the
    number of draws.
    """
    x = np.asarray(chain_component, dtype=float)
    n = x.size
    if n < 100:
        raise ValueError("need at least 100 draws for an ESS estimate")
    if float(np.ptp(x)) == 0.0:
        warnings.warn("constant chain: ESS undefined, returning 0")
        return 0.0
    rho = acf(x, n - 1)
    n_pairs = (rho.size - 1) // 2
    pair = rho[0:2 * n_pairs:2] + rho[1:2 * n_pairs:2]
    positive = np.flatnonzero(pair <= 0.0)
    cut = positive[0] if positive.size else n_pairs
    if cut == 0:
        return float(n)
    kept = np.minimum.accumulate(pair[:cut])
    tau = max(2.0 * float(kept.sum()) - 1.0, 1.0 / n)
    return float(min(n, n / tau))


def pearson_residuals(spec: ModelSpec, posterior_mean_params: ParamVector,
                      x: CountSeries) -> np.ndarray:
    """Standardized one-step residuals (x_t - lam_t) / sqrt(lam_t) at the
    supplied parameter values (conditional mean and variance coincide)."""
    path = intensity_path(spec, posterior_mean_params, x)
    xt = x.values[1:].astype(float)
    return (xt - path.lam) / np.sqrt(path.lam)


def _intensity_matrix(spec, draws, x):
    lam = np.empty((draws.shape[0], x.n))
    for i in range(draws.shape[0]):
        p = ParamVector(*draws[i])
        lam[i] = intensity_path(spec, p, x).lam
    return lam


def thin_draws(draws, limit=1000):
    draws = np.asarray(draws, dtype=float)
    if draws.shape[0] <= limit:
        return draws
    idx = np.linspace(0, draws.shape[0] - 1, limit).astype(int)
    return draws[idx]


def forecast_metrics(spec: ModelSpec, draws, x: CountSeries,
                     point_forecast: str = "draws",
                     thin_to: int = 1000) -> ForecastReport:
    """One-step-ahead accuracy of the posterior sample.

    The point forecast averages the conditional intensity over draws
    (point_forecast="plugin" instead evaluates at the draw means); the log
    predictive density averages the Poisson mass over draws before taking
    logs.  Draws are thinned to at most thin_to rows for cost.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[0] == 0:
        raise ValueError("need at least one posterior draw")
    draws = thin_draws(draws, thin_to)
    xt = x.values[1:].astype(float)
    lam = _intensity_matrix(spec, draws, x)
    if point_forecast == "plugin":
        mean_params = ParamVector(*draws.mean(axis=0))
        m_hat = intensity_path(spec, mean_params, x).lam
    else:
        m_hat = lam.mean(axis=0)
    err = xt - m_hat
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    log_pmf = xt[None, :] * np.log(lam) - lam - gammaln(xt + 1.0)[None, :]
    lpd = float(np.sum(logsumexp(log_pmf, axis=0) - math.log(draws.shape[0])))
    return ForecastReport(mae=mae, rmse=rmse, lpd=lpd)


def running_mean(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    return np.cumsum(x) / np.arange(1, x.size + 1)


def posterior_summary(chain: ChainResult, burn_in=None) -> PosteriorSummary:
    """Moments and quantiles of the post-burn-in draws."""
    if burn_in is None:
        burn_in = chain.burn_in
    if not burn_in < chain.draws.shape[0]:
        raise ValueError("burn_in leaves no draws")
    kept = chain.draws[burn_in:]
    qs = np.quantile(kept, [0.025, 0.5, 0.975], axis=0)
    ess_vals = np.empty(kept.shape[1])
    for j in range(kept.shape[1]):
        if kept.shape[0] >= 100:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                ess_vals[j] = ess(kept[:, j])
        else:
            ess_vals[j] = float("nan")
    sd = kept.std(axis=0, ddof=1)
    sd[np.ptp(kept, axis=0) == 0.0] = 0.0   # exactly-constant columns
    return PosteriorSummary(
        names=PARAM_NAMES[:kept.shape[1]],
        mean=kept.mean(axis=0),
        sd=sd,
        q025=qs[0], median=qs[1], q975=qs[2],
        ess=ess_vals,
        acceptance_rate=float(chain.accepted_theta[burn_in:].mean()),
        acceptance_rate_lambda0=float(chain.accepted_lambda0[burn_in:].mean()),
    )
