"""Regression for bounded methylation ratios built on a correlated
bivariate gamma signal model, with baseline models, Wald inference, a
simulation harness, and a parallel site-wise pipeline."""

from .errors import (
    ConfigError,
    DomainError,
    NonConvergenceError,
    NumericalDomainError,
    ParseError,
    RankDeficiencyError,
    SingularInformationError,
)
from .fitting import (
    BaselineParams,
    FitConfig,
    FitResult,
    fit_beta_regression,
    fit_mvalue,
    fit_rcg_boost,
    fit_rcg_direct,
)
from .kibble import KibbleMoments, KibbleParams
from .kibble import log_density as kibble_log_density
from .kibble import moments as kibble_moments
from .kibble import sample as kibble_sample
from .pipeline import (
    CovariateTable,
    MethylationMatrix,
    SiteResult,
    load_inputs,
    read_results,
    run_sitewise,
    write_results,
)
from .rcg import (
    Dataset,
    RcgParams,
    WaldStat,
    log_density_theta,
    log_likelihood,
    observed_information,
    score_gamma,
    wald_tests,
)
from .simulate import (
    CovariateSpec,
    ExperimentReport,
    SimSpec,
    run_experiment,
    simulate_dataset,
)
from .specfun import gauss_2f1, log_bessel_i, log_gamma

__version__ = "0.1.0"

__all__ = [
    "BaselineParams",
    "ConfigError",
    "CovariateSpec",
    "CovariateTable",
    "Dataset",
    "DomainError",
    "ExperimentReport",
    "FitConfig",
    "FitResult",
    "KibbleMoments",
    "KibbleParams",
    "MethylationMatrix",
    "NonConvergenceError",
    "NumericalDomainError",
    "ParseError",
    "RankDeficiencyError",
    "RcgParams",
    "SimSpec",
    "SingularInformationError",
    "SiteResult",
    "WaldStat",
    "fit_beta_regression",
    "fit_mvalue",
    "fit_rcg_boost",
    "fit_rcg_direct",
    "gauss_2f1",
    "kibble_log_density",
    "kibble_moments",
    "kibble_sample",
    "load_inputs",
    "log_bessel_i",
    "log_density_theta",
    "log_gamma",
    "log_likelihood",
    "observed_information",
    "read_results",
    "run_experiment",
    "run_sitewise",
    "score_gamma",
    "simulate_dataset",
    "wald_tests",
    "write_results",
    "__version__",
]
