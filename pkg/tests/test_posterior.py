import time

import numpy as np
import pytest
from helpers import prior_scale, random_grid, random_partial, random_regular, random_theta

from mlgp.errors import InvalidInput
from mlgp.kernel import HyperParams, KernelSpec
from mlgp.model import RegularDataset, naive_full_cov
from mlgp.posterior import (
    GaussianPosterior,
    credible_band,
    function_bands,
    joint_prior,
    posterior,
    posterior_eta_regular,
    posterior_joint_partial,
    posterior_mu_regular,
    posterior_naive,
    posterior_regular,
    sample_f,
)
from mlgp.linalg import CholeskyFactor

UNIT = HyperParams(KernelSpec("se", 1.0, 1.0), KernelSpec("se", 1.0, 1.0), 1.0)


def test_huge_noise_recovers_prior():
    rng = np.random.default_rng(0)
    theta = HyperParams(KernelSpec("se", 1.0, 0.4), KernelSpec("se", 0.5, 0.4), 1e6)
    data = random_regular(rng, 3, 6)
    post = posterior_naive(theta, data, np.linspace(0, 1, 4))
    assert np.abs(post.mean).max() <= 1e-3 * np.sqrt(0.5)


def test_noiseless_common_signal_gives_column_average():
    rng = np.random.default_rng(1)
    theta = HyperParams(KernelSpec("se", 1.0, 0.3), KernelSpec("se", 0.0, 0.3), 1e-6)
    t = random_grid(rng, 5)
    data = RegularDataset(t, rng.standard_normal((5, 3)))
    post = posterior_naive(theta, data, t, targets=["mu"])
    np.testing.assert_allclose(post.mean, data.Y.mean(axis=1), atol=1e-3)


def condition(mean, cov, idx_obs, values):
    keep = np.setdiff1d(np.arange(mean.size), idx_obs)
    S_oo = cov[np.ix_(idx_obs, idx_obs)]
    S_ko = cov[np.ix_(keep, idx_obs)]
    gain = np.linalg.solve(S_oo, S_ko.T).T
    return keep, mean[keep] + gain @ (values - mean[idx_obs]), cov[np.ix_(keep, keep)] - gain @ S_ko.T


def test_two_stage_conditioning_matches_one_stage():
    rng = np.random.default_rng(2)
    theta = random_theta(rng)
    data = random_regular(rng, 3, 4)
    t_pred = random_grid(rng, 2)
    targets = ["eta1", "eta2", "eta3", "mu"]
    C_tt, C_yt = joint_prior(theta, data, t_pred, targets)
    Sigma = naive_full_cov(theta, data)
    T, N = C_tt.shape[0], Sigma.shape[0]
    joint = np.block([[C_tt, C_yt.T], [C_yt, Sigma]])
    y = data.y
    first = np.arange(T, T + N // 2)
    keep, m1, c1 = condition(np.zeros(T + N), joint, first, y[: N // 2])
    # remaining coordinates: targets then the second half of y
    _, m2, c2 = condition(m1, c1, np.arange(T, keep.size), y[N // 2:])
    one = posterior_naive(theta, data, t_pred, targets=targets)
    np.testing.assert_allclose(m2, one.mean, atol=1e-8)
    np.testing.assert_allclose(c2, one.covariance(), atol=1e-8)


def test_mu_posterior_zero_prior():
    theta = HyperParams(KernelSpec("se", 0.0, 1.0), KernelSpec("se", 1.0, 0.5), 0.5)
    data = random_regular(np.random.default_rng(3), 3, 4)
    post = posterior_mu_regular(theta, data, [0.2, 0.6])
    assert not np.any(post.mean)
    assert not np.any(post.covariance())


def test_mu_posterior_smallest_case():
    data = RegularDataset([0.0], [[0.5, -1.0]])
    post = posterior_mu_regular(UNIT, data, [0.0])
    naive = posterior_naive(UNIT, data, [0.0], targets=["mu"])
    np.testing.assert_allclose(post.mean, naive.mean, atol=1e-12)
    np.testing.assert_allclose(post.covariance(), naive.covariance(), atol=1e-12)


def test_conditioning_reduces_variance():
    rng = np.random.default_rng(4)
    theta = random_theta(rng)
    post = posterior_mu_regular(theta, random_regular(rng, 4, 6), np.linspace(0, 1, 5))
    assert np.all(np.diag(post.covariance()) <= theta.mu_kernel.variance + 1e-12)


def test_eta_posterior_zero_prior():
    theta = HyperParams(KernelSpec("se", 1.0, 1.0), KernelSpec("se", 0.0, 0.5), 0.5)
    post = posterior_eta_regular(theta, random_regular(np.random.default_rng(5), 3, 4), [0.1, 0.7])
    assert not np.any(post.mean)
    assert not np.any(post.covariance())


def test_eta_posterior_mean_sums_to_zero():
    rng = np.random.default_rng(6)
    theta = random_theta(rng)
    data = random_regular(rng, 4, 5)
    post = posterior_eta_regular(theta, data, np.linspace(0, 1, 3))
    eta = post.mean.reshape(3, 3, order="F")
    full = np.column_stack([eta, -eta.sum(axis=1)])
    naive = posterior_naive(theta, data, np.linspace(0, 1, 3), targets=["eta1", "eta2", "eta3", "eta4"])
    np.testing.assert_allclose(full.reshape(-1, order="F"), naive.mean, atol=1e-10)
    np.testing.assert_allclose(naive.mean.reshape(3, 4, order="F").sum(axis=1), 0.0, atol=1e-10)


def test_eta_posterior_matches_oracle():
    rng = np.random.default_rng(7)
    theta = random_theta(rng)
    data = random_regular(rng, 4, 5)
    t_pred = random_grid(rng, 3)
    post = posterior_eta_regular(theta, data, t_pred)
    naive = posterior_naive(theta, data, t_pred, targets=["eta1", "eta2", "eta3"])
    np.testing.assert_allclose(post.mean, naive.mean, atol=1e-8)
    np.testing.assert_allclose(post.covariance(), naive.covariance(), atol=1e-8)
    dense = posterior_eta_regular(theta, data, t_pred, factor="dense", dense_cov=True)
    np.testing.assert_allclose(dense.covariance(), naive.covariance(), atol=1e-8)


def test_partial_without_irregular_equals_regular():
    rng = np.random.default_rng(8)
    theta = random_theta(rng)
    data = random_regular(rng, 3, 5)
    t_pred = random_grid(rng, 4)
    joint = posterior_joint_partial(theta, data.as_partial(), t_pred)
    mu, eta = posterior_regular(theta, data, t_pred, dense_cov=True)
    cov = joint.covariance()
    k = eta.mean.size
    np.testing.assert_allclose(joint.mean[:k], eta.mean, atol=1e-10)
    np.testing.assert_allclose(joint.mean[k:], mu.mean, atol=1e-10)
    np.testing.assert_allclose(cov[:k, :k], eta.covariance(), atol=1e-10)
    np.testing.assert_allclose(cov[k:, k:], mu.covariance(), atol=1e-10)
    assert np.abs(cov[k:, :k]).max() <= 1e-8


@pytest.mark.parametrize("n_a,J_a,J_b,J_p", [(1, 3, [2, 4], 3), (2, 4, [3], 2), (3, 5, [2, 3, 4], 4)])
def test_partial_joint_matches_oracle(n_a, J_a, J_b, J_p):
    rng = np.random.default_rng(n_a)
    theta = random_theta(rng)
    data = random_partial(rng, n_a, J_a, J_b)
    t_pred = random_grid(rng, J_p)
    naive = posterior_naive(theta, data, t_pred)
    scale = prior_scale(theta)
    for factor in ("block", "dense"):
        post = posterior_joint_partial(theta, data, t_pred, factor=factor)
        assert post.labels == naive.labels
        np.testing.assert_allclose(post.mean, naive.mean, atol=1e-7 * np.sqrt(scale))
        np.testing.assert_allclose(post.covariance(), naive.covariance(), atol=1e-7 * scale)
        np.testing.assert_allclose(post.cov_chol.dense(), naive.covariance(), atol=1e-7 * scale)


def test_labels_order():
    rng = np.random.default_rng(9)
    post = posterior_joint_partial(random_theta(rng), random_partial(rng, 2, 3, [2]), [0.1, 0.5])
    assert post.labels == [("eta1", 0), ("eta1", 1), ("eta2", 0), ("eta2", 1), ("mu", 0), ("mu", 1)]
    assert post.targets == ["eta1", "eta2", "mu"]


def test_sizes_checked():
    with pytest.raises(InvalidInput):
        GaussianPosterior([("mu", 0)], np.zeros(2), CholeskyFactor(np.eye(2)), np.zeros(1), 2)


def test_zero_covariance_draws_equal_mean():
    mu = GaussianPosterior([("mu", 0), ("mu", 1)], np.array([1.0, 2.0]), CholeskyFactor(np.zeros((2, 2))),
                           np.array([0.0, 1.0]), 2)
    eta = GaussianPosterior([("eta1", 0), ("eta1", 1)], np.array([0.5, -0.5]), CholeskyFactor(np.zeros((2, 2))),
                            np.array([0.0, 1.0]), 2)
    draws = sample_f((mu, eta), 10, seed=0)
    np.testing.assert_array_equal(draws.mu, np.tile([1.0, 2.0], (10, 1)))
    np.testing.assert_array_equal(draws.eta[:, 1], np.tile([-0.5, 0.5], (10, 1)))
    np.testing.assert_array_equal(draws.f[:, 0], np.tile([1.5, 1.5], (10, 1)))


def test_draws_sum_to_zero_and_are_deterministic():
    rng = np.random.default_rng(10)
    theta = random_theta(rng)
    for data in (random_regular(rng, 5, 4), random_partial(rng, 2, 4, [3, 2])):
        posts = posterior(theta, data, np.linspace(0, 1, 6))
        a = sample_f(posts, 20, seed=3)
        b = sample_f(posts, 20, seed=3)
        np.testing.assert_array_equal(a.f, b.f)
        assert np.abs(a.eta.sum(axis=1)).max() <= 1e-9


def test_missing_targets_rejected():
    rng = np.random.default_rng(11)
    theta = random_theta(rng)
    mu, _ = posterior_regular(theta, random_regular(rng, 3, 4), [0.5])
    with pytest.raises(InvalidInput):
        sample_f(mu, 1, seed=0)


@pytest.mark.slow
def test_monte_carlo_covariance():
    rng = np.random.default_rng(12)
    theta = random_theta(rng)
    data = random_partial(rng, 2, 3, [2])
    post = posterior_joint_partial(theta, data, [0.2, 0.8])
    draws = sample_f(post, 50000, seed=1)
    x = np.column_stack([draws.eta[:, 0], draws.eta[:, 1], draws.mu])
    emp = np.cov(x, rowvar=False)
    cov = post.covariance()
    se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov ** 2) / x.shape[0])
    assert np.all(np.abs(emp - cov) <= 5 * se)
    np.testing.assert_allclose(x.mean(axis=0), post.mean, atol=5 * np.sqrt(np.diag(cov) / x.shape[0]).max())


def test_analytic_band_quantile():
    post = GaussianPosterior([("mu", 0), ("mu", 1)], np.zeros(2), CholeskyFactor(np.diag([1.0, 0.0])),
                             np.array([0.0, 1.0]), 2)
    lo, hi = credible_band(post, 0.9)
    np.testing.assert_allclose([lo[0], hi[0]], [-1.6449, 1.6449], atol=1e-3)
    assert lo[1] == hi[1] == 0.0


@pytest.mark.parametrize("level", [0.0, 1.0, -0.2, 1.5])
def test_invalid_level(level):
    with pytest.raises(InvalidInput):
        credible_band(np.zeros((3, 2)), level)


@pytest.mark.slow
def test_empirical_band_matches_analytic():
    rng = np.random.default_rng(13)
    theta = random_theta(rng)
    post = posterior_mu_regular(theta, random_regular(rng, 3, 5), np.linspace(0, 1, 4))
    draws = sample_f((post, posterior_eta_regular(theta, random_regular(rng, 3, 5), np.linspace(0, 1, 4))),
                     50000, seed=2)
    lo, hi = credible_band(post, 0.9)
    elo, ehi = credible_band(draws.mu, 0.9)
    sd = post.marginal_sd()
    assert np.all(np.abs(elo - lo) <= 0.05 * sd)
    assert np.all(np.abs(ehi - hi) <= 0.05 * sd)


def test_function_bands_match_oracle():
    rng = np.random.default_rng(14)
    theta = random_theta(rng)
    data = random_partial(rng, 2, 4, [3])
    t_pred = np.linspace(0, 1, 3)
    eff = function_bands(posterior(theta, data, t_pred))
    naive = function_bands(posterior(theta, data, t_pred, "naive"))
    for key in ["mu", "f1", "f2", "f3"]:
        np.testing.assert_allclose(np.array(eff[key]), np.array(naive[key]), atol=1e-8)


@pytest.mark.slow
def test_block_sampling_faster_than_dense():
    theta = HyperParams(KernelSpec("matern32", 1.0, 0.3), KernelSpec("matern32", 0.5, 0.3), 0.3)
    rng = np.random.default_rng(15)
    t = np.linspace(0, 1, 100)
    data = RegularDataset(t, rng.standard_normal((100, 100)))

    def timed(factor):
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            post = posterior_eta_regular(theta, data, t, factor=factor)
            sample_f((posterior_mu_regular(theta, data, t), post), 1, seed=0)
            times.append(time.perf_counter() - t0)
        return np.median(times)

    assert timed("dense") >= 2 * timed("block")
