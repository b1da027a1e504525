"""Bayesian posterior computation for Poisson INGARCH(1,1) count time series.

Public surface: model definitions and simulation, the negative-binomial /
Polya-Gamma state-dependent Gaussian proposal, a Metropolis-Hastings sampler
calibrated by the exact likelihood, Pareto-smoothed adaptive importance
sampling, an MLE baseline, and diagnostic / forecasting tools.
"""

from .errors import (
    ConfigError,
    DataError,
    DegenerateTailError,
    IllConditionedProposalError,
    IngarchError,
    NonStationaryError,
    NumericalOverflowError,
    OptimizerError,
    SamplerFailureError,
)
from .model import (
    CountSeries,
    IntensityPath,
    Link,
    ModelSpec,
    ParamVector,
    check_stationarity,
    intensity_path,
    log_likelihood,
    simulate,
)
from .nb_approx import NbSchedule, build_schedule, discrepancy, select_r
from .polya_gamma import pg_laplace_lhs_rhs, pg_mean, sample_pg, sample_pg_many
from .proposal import GaussianPrior, GaussianProposal, Linearization, \
    build_proposal, linearize, proposal_logpdf, sample_proposal
from .mh import ChainResult, MhConfig, PriorSpec, log_posterior, \
    mh_lambda0_step, mh_theta_step, run_chain
from .psais import GpdFit, PsaisConfig, PsaisResult, fit_gpd, khat_threshold, \
    pareto_smooth, psais_run, raw_log_ratio, raw_ratio, uphill_update
from .mle import mle_fit
from .diagnostics import ForecastReport, PosteriorSummary, acf, ess, \
    forecast_metrics, pearson_residuals, posterior_summary

__version__ = "0.1.0"
