"""Nonparametric Bayesian binary regression with a Dirichlet process mixture of normals."""
__version__ = "0.1.0"

from .compare import PplReport, fit_product_kernel, ppl_criterion, predictive_moments, product_kernel_prior
from .data import Dataset, from_frame, ingest_csv, load_ozone, read_draws, write_draws
from .errors import ConfigError, DataError, DPBinRegError, InvalidParameterError, NumericalDegeneracyError
from .gibbs import PosteriorDraws, SamplerConfig, run_chain, run_chains
from .hyper import HyperPrior, HyperState
from .kernel import KernelAtom, covariance, factorize_covariance
from .mixture import MixtureState
from .prior import PriorSketch, elicit_inverse_wishart, elicit_uniform_correlation

__all__ = [
    "ConfigError",
    "DPBinRegError",
    "DataError",
    "Dataset",
    "HyperPrior",
    "HyperState",
    "InvalidParameterError",
    "KernelAtom",
    "MixtureState",
    "NumericalDegeneracyError",
    "PosteriorDraws",
    "PplReport",
    "PriorSketch",
    "SamplerConfig",
    "covariance",
    "elicit_inverse_wishart",
    "elicit_uniform_correlation",
    "factorize_covariance",
    "fit_product_kernel",
    "from_frame",
    "ingest_csv",
    "load_ozone",
    "ppl_criterion",
    "predictive_moments",
    "product_kernel_prior",
    "read_draws",
    "run_chain",
    "run_chains",
    "write_draws",
]
