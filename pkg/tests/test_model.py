import numpy as np
import pytest
from helpers import random_grid, random_theta

from mlgp.errors import InvalidInput
from mlgp.kernel import HyperParams, KernelSpec, gram
from mlgp.model import (
    PartialDataset,
    RegularDataset,
    naive_full_cov,
    omega_matrix,
    partial_cov_blocks,
    regular_cov_blocks,
    simulate_partial,
    simulate_regular,
    xi_matrix,
)

UNIT = HyperParams(KernelSpec("se", 1.0, 1.0), KernelSpec("se", 1.0, 1.0), 1.0)


def test_xi_two_functions():
    np.testing.assert_array_equal(xi_matrix(2), [[1.0, -1.0], [-1.0, 1.0]])


def test_omega_squares_to_xi_three():
    Xi = xi_matrix(3)
    assert np.all(np.diag(Xi) == 1.0)
    assert np.allclose(Xi[~np.eye(3, dtype=bool)], -0.5)
    np.testing.assert_allclose(omega_matrix(3) @ omega_matrix(3), Xi, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 7, 50, 100])
def test_omega_properties(n):
    Om = omega_matrix(n)
    np.testing.assert_array_equal(Om, Om.T)
    np.testing.assert_allclose(Om @ Om, xi_matrix(n), atol=1e-10)
    np.testing.assert_allclose(np.ones(n) @ Om, 0.0, atol=1e-10)
    np.testing.assert_allclose(xi_matrix(n).sum(axis=1), 0.0, atol=1e-12)


@pytest.mark.parametrize("fn", [xi_matrix, omega_matrix])
def test_single_function_rejected(fn):
    with pytest.raises(InvalidInput):
        fn(1)


def test_dataset_validation():
    with pytest.raises(InvalidInput, match="n >= 2"):
        RegularDataset([0.0, 1.0], [[1.0], [2.0]])
    with pytest.raises(InvalidInput):
        RegularDataset([0.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(InvalidInput):
        PartialDataset([0.0, 1.0], np.zeros((2, 1)))
    with pytest.raises(InvalidInput):
        PartialDataset([0.0, 1.0], np.zeros((2, 1)), (([0.2, 0.3], [1.0]),))


def test_dataset_sorts_grid():
    d = RegularDataset([1.0, 0.0], [[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(d.t, [0.0, 1.0])
    np.testing.assert_array_equal(d.Y, [[3.0, 4.0], [1.0, 2.0]])


def test_partial_sizes():
    d = PartialDataset([0.0, 0.5], np.zeros((2, 3)), (([0.1], [1.0]), ([0.2, 0.4], [1.0, 2.0])))
    assert (d.n_a, d.n_b, d.n, d.N, d.N_b) == (3, 2, 5, 9, 3)
    assert d.y.size == d.N


def test_noiseless_no_deviation_simulation():
    theta = HyperParams(KernelSpec("se", 1.0, 0.3), KernelSpec("se", 0.0, 0.3), 0.0)
    data, truth = simulate_regular(theta, np.linspace(0, 1, 10), 4, seed=1)
    for j in range(4):
        np.testing.assert_allclose(data.Y[:, j], truth.mu, atol=1e-12)


def test_simulated_deviations_sum_to_zero():
    rng = np.random.default_rng(0)
    for seed in range(10):
        theta = random_theta(rng)
        _, truth = simulate_regular(theta, random_grid(rng, 12), int(rng.integers(2, 9)), seed=seed)
        np.testing.assert_allclose(truth.eta.sum(axis=1), 0.0, atol=1e-10)


def test_simulation_deterministic():
    a, ta = simulate_regular(UNIT, np.linspace(0, 1, 5), 3, seed=9)
    b, tb = simulate_regular(UNIT, np.linspace(0, 1, 5), 3, seed=9)
    np.testing.assert_array_equal(a.Y, b.Y)
    np.testing.assert_array_equal(ta.eta, tb.eta)


@pytest.mark.slow
def test_deviation_marginal_variance_monte_carlo():
    theta = HyperParams(KernelSpec("se", 1.0, 0.5), KernelSpec("se", 0.7, 0.4), 0.1)
    values = np.array([
        simulate_regular(theta, [0.3], 3, seed=s)[1].eta[0, 0] for s in range(10000)
    ])
    se = 0.7 * np.sqrt(2.0 / (values.size - 1))
    assert abs(values.var(ddof=1) - 0.7) < 5 * se


def test_partial_without_irregular_matches_regular():
    t = np.linspace(0, 1, 6)
    reg, _ = simulate_regular(UNIT, t, 3, seed=4)
    par, _ = simulate_partial(UNIT, t, 3, [], seed=4)
    np.testing.assert_array_equal(reg.Y, par.Y_a)


def test_partial_simulation_shared_points_equal_mu():
    theta = HyperParams(KernelSpec("se", 1.0, 0.3), KernelSpec("se", 0.0, 0.3), 0.0)
    t = np.linspace(0, 1, 5)
    data, truth = simulate_partial(theta, t, 2, [t, t[:3]], seed=2)
    idx = np.searchsorted(truth.t, t)
    np.testing.assert_allclose(data.Y_a, truth.mu[idx, None] * np.ones((1, 2)), atol=1e-12)
    np.testing.assert_allclose(data.irregular[1][1], truth.mu[idx[:3]], atol=1e-12)


def test_partial_simulation_zero_sum_on_union():
    rng = np.random.default_rng(5)
    theta = random_theta(rng)
    _, truth = simulate_partial(theta, random_grid(rng, 6), 2, [random_grid(rng, 4), random_grid(rng, 3)], seed=3)
    np.testing.assert_allclose(truth.eta.sum(axis=1), 0.0, atol=1e-10)


def test_sigma0_without_deviation_kernel():
    theta = HyperParams(KernelSpec("se", 1.0, 0.5), KernelSpec("se", 0.0, 0.5), 0.3)
    blocks = regular_cov_blocks(theta, np.linspace(0, 1, 4), 3)
    np.testing.assert_allclose(blocks.Sigma0, 0.09 * np.eye(4))


def test_sigma0_two_functions():
    t = np.linspace(0, 1, 4)
    blocks = regular_cov_blocks(UNIT, t, 2)
    np.testing.assert_allclose(blocks.Sigma0, 2 * gram(UNIT.eta_kernel, t, t) + np.eye(4))


def test_smallest_naive_covariance():
    Sigma = naive_full_cov(UNIT, RegularDataset([0.0], [[0.0, 0.0]]))
    np.testing.assert_allclose(Sigma, [[3.0, 0.0], [0.0, 3.0]], atol=1e-15)


def kron_assembly(theta, t, n):
    """Two-Kronecker form I (x) (G - H) + 1 (x) H of the regular covariance."""
    Kmu = gram(theta.mu_kernel, t, t)
    Keta = gram(theta.eta_kernel, t, t)
    G = Kmu + Keta + theta.noise_sd ** 2 * np.eye(t.size)
    H = Kmu - Keta / (n - 1)
    return np.kron(np.eye(n), G - H) + np.kron(np.ones((n, n)), H)


def test_naive_matches_kronecker_assembly():
    rng = np.random.default_rng(6)
    for _ in range(10):
        theta = random_theta(rng)
        n = int(rng.integers(2, 7))
        t = random_grid(rng, int(rng.integers(1, 9)))
        Sigma = naive_full_cov(theta, RegularDataset(t, np.zeros((t.size, n))))
        np.testing.assert_array_equal(Sigma, Sigma.T)
        np.testing.assert_allclose(Sigma, kron_assembly(theta, t, n), atol=1e-12)


def test_partial_blocks_assemble_naive_covariance():
    rng = np.random.default_rng(7)
    for _ in range(10):
        theta = random_theta(rng)
        n_a = int(rng.integers(1, 4))
        t_a = random_grid(rng, 4)
        t_b = [random_grid(rng, int(rng.integers(2, 5))) for _ in range(int(rng.integers(1, 4)))]
        n = n_a + len(t_b)
        data = PartialDataset(t_a, np.zeros((4, n_a)), tuple((tb, np.zeros(tb.size)) for tb in t_b))
        blocks = partial_cov_blocks(theta, t_a, n_a, t_b)
        Kmu = gram(theta.mu_kernel, t_a, t_a)
        Keta = gram(theta.eta_kernel, t_a, t_a)
        G = Kmu + Keta + theta.noise_sd ** 2 * np.eye(4)
        H = Kmu - Keta / (n - 1)
        A = np.kron(np.eye(n_a), G - H) + np.kron(np.ones((n_a, n_a)), H)
        C = np.kron(np.ones((1, n_a)), blocks.Cb.T)
        assembled = np.block([[A, C.T], [C, blocks.B]])
        np.testing.assert_allclose(assembled, naive_full_cov(theta, data), atol=1e-12)
        # A0, A1 are the eigen-blocks of A
        np.testing.assert_allclose(blocks.A0, G - H, atol=1e-12)
        np.testing.assert_allclose(blocks.A1, G - H + n_a * H, atol=1e-12)
        S = blocks.B - n_a * blocks.Cb.T @ np.linalg.solve(blocks.A1, blocks.Cb)
        np.testing.assert_allclose(blocks.S, S, atol=1e-10)


def test_partial_without_irregular_equals_regular_covariance():
    t = np.linspace(0, 1, 3)
    Y = np.arange(9.0).reshape(3, 3)
    reg = RegularDataset(t, Y)
    np.testing.assert_array_equal(naive_full_cov(UNIT, reg), naive_full_cov(UNIT, reg.as_partial()))
