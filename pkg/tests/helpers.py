"""Random instance generators shared by the test modules."""

import numpy as np

from mlgp.kernel import MATERN32, SQUARED_EXPONENTIAL, HyperParams, KernelSpec
from mlgp.model import PartialDataset, RegularDataset


def random_theta(rng, families=(SQUARED_EXPONENTIAL, MATERN32)):
    """Variances in [0.1, 3], lengthscales in [0.3, 3], noise sd in [0.05, 1]."""
    def kern():
        return KernelSpec(rng.choice(families), rng.uniform(0.1, 3.0), rng.uniform(0.3, 3.0))

    return HyperParams(kern(), kern(), rng.uniform(0.05, 1.0))


def random_grid(rng, size):
    while True:
        t = np.sort(rng.uniform(0.0, 1.0, size))
        if np.all(np.diff(t) > 1e-3):
            return t


def random_regular(rng, n, J):
    return RegularDataset(random_grid(rng, J), rng.standard_normal((J, n)))


def random_partial(rng, n_a, J_a, J_b):
    irregular = tuple((random_grid(rng, j), rng.standard_normal(j)) for j in J_b)
    return PartialDataset(random_grid(rng, J_a), rng.standard_normal((J_a, n_a)), irregular)


def prior_scale(theta):
    return max(theta.mu_kernel.variance, theta.eta_kernel.variance)
