"""probmod: a small probabilistic programming library on a numpy autodiff core.

Random variables are declared by assigning distributions to module
attributes, conditioned with ``observe``, and fitted by variational
inference, MAP, or random-walk Metropolis through swappable posteriors.
"""

from . import distributions, infer, nn, persist, posterior
from .distributions import Categorical, HalfNormal, LogNormal, Normal, PointMassDist, kl_divergence
from .infer import SGD, Adam, elbo, fit_map, fit_mcmc, fit_vi, log_joint
from .module import PModule, RandomVariable, named_parameters, parameters, pq_terms, sample, set_posteriors
from .random import RngState, get_rng, manual_seed, rand, randn, using_rng
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "distributions",
    "infer",
    "nn",
    "persist",
    "posterior",
    "Categorical",
    "HalfNormal",
    "LogNormal",
    "Normal",
    "PointMassDist",
    "kl_divergence",
    "SGD",
    "Adam",
    "elbo",
    "fit_map",
    "fit_mcmc",
    "fit_vi",
    "log_joint",
    "PModule",
    "RandomVariable",
    "named_parameters",
    "parameters",
    "pq_terms",
    "sample",
    "set_posteriors",
    "RngState",
    "get_rng",
    "manual_seed",
    "rand",
    "randn",
    "using_rng",
    "Parameter",
    "Tensor",
    "no_grad",
]
