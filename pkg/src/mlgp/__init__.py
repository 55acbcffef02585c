"""Exact multi-level Gaussian process regression with structured linear algebra."""

from .errors import InvalidInput, NotPositiveDefinite, NumericalOverflow
from .kernel import HyperParams, KernelSpec, gram
from .likelihood import loglik, loglik_naive, loglik_partial, loglik_regular
from .model import PartialDataset, RegularDataset, simulate_partial, simulate_regular
from .posterior import (
    GaussianPosterior,
    credible_band,
    posterior,
    posterior_eta_regular,
    posterior_joint_partial,
    posterior_mu_regular,
    posterior_naive,
    sample_f,
)

__version__ = "0.1.0"
