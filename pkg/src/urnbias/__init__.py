"""Bayesian population-size estimation under biased-urn (FNCH) sampling.

The package provides exact evaluation and sampling for Fisher's noncentral
hypergeometric distribution, a Metropolis-within-Gibbs sampler for the joint
posterior of group sizes and capture odds, a likelihood-free Gibbs-ABC
alternative, and the three-step Italian graduate-employment case study with
its accompanying coverage simulation study.
"""

__version__ = "0.1.0"

from .fnch import (
    FnchParams,
    UnivariateSupport,
    BinomialCaptureModel,
    log_pmf_univariate,
    log_pmf_multivariate,
    conditional_pair_params,
    sample_univariate,
    binomial_condition_oracle,
)
from .priors import (
    PriorSpec,
    TruncatedPoisson,
    DiscreteUniform,
    LogNormalOdds,
    Degenerate,
    DiscretizedTruncatedNormal,
    ElicitedMoments,
    elicit_from_moments,
    prior_from_json,
    prior_to_json,
)
from .summaries import PosteriorSummary, summarize, coverage
from .mcmc import McmcConfig, ChainDraws, run_univariate_posterior, run_multivariate_posterior
from .gibbs_abc import AbcConfig, summary_stat, distance, calibrate_epsilon, run_gibbs_abc
from .casedata import CohortCell, CohortDataError, load_cohort_tables, survey_years
from .pipeline import (
    PipelineConfig,
    CellFit,
    StepResult,
    step1_istat,
    step2_almalaurea,
    step3_timeseries,
    sensitivity,
    emit_plot_data,
    run_all,
)
from .simstudy import SimStudyConfig, SimStudyReport, simulation_study

__all__ = [
    "FnchParams",
    "UnivariateSupport",
    "BinomialCaptureModel",
    "log_pmf_univariate",
    "log_pmf_multivariate",
    "conditional_pair_params",
    "sample_univariate",
    "binomial_condition_oracle",
    "PriorSpec",
    "TruncatedPoisson",
    "DiscreteUniform",
    "LogNormalOdds",
    "Degenerate",
    "DiscretizedTruncatedNormal",
    "ElicitedMoments",
    "elicit_from_moments",
    "prior_from_json",
    "prior_to_json",
    "PosteriorSummary",
    "summarize",
    "coverage",
    "McmcConfig",
    "ChainDraws",
    "run_univariate_posterior",
    "run_multivariate_posterior",
    "AbcConfig",
    "summary_stat",
    "distance",
    "calibrate_epsilon",
    "run_gibbs_abc",
    "CohortCell",
    "CohortDataError",
    "load_cohort_tables",
    "survey_years",
    "PipelineConfig",
    "CellFit",
    "StepResult",
    "step1_istat",
    "step2_almalaurea",
    "step3_timeseries",
    "sensitivity",
    "emit_plot_data",
    "run_all",
    "SimStudyConfig",
    "SimStudyReport",
    "simulation_study",
    "__version__",
]
