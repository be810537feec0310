"""Bayesian inference of SFP rates at test and supply nodes of a supply chain."""

from .supply_model import (
    TRACKED,
    UNTRACKED,
    Dataset,
    Diagnostic,
    DomainError,
    RateVector,
    SourcingMatrix,
    SupplyChain,
    TestRecord,
    consolidated_rate_three_echelon,
    consolidated_rate_tracked,
    consolidated_rate_untracked,
    positive_probability,
)
from .priors import Prior, log_density, prior_mean_rate, rate_quantile
from .likelihood import (
    LogitRates,
    PosteriorModel,
    TraceStats,
    grad_log_posterior,
    hessian_log_posterior,
    log_likelihood,
    log_posterior,
    sufficient_stats,
)
from .nuts_sampler import PosteriorDraws, SamplerConfig, rhat, sample
from .identifiability import Witness, tracked_witness, untracked_witness
from .inference import (
    NodeInterval,
    Thresholds,
    bootstrap_q_sensitivity,
    classify,
    credible_intervals,
    estimate_q,
    wald_interval,
)

__version__ = "0.1.0"
