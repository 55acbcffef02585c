"""The multi-level model, its datasets and derived covariance blocks.

Each observed function is ``f_i = mu + eta_i`` with a common mean process
``mu ~ GP(0, K_mu)`` and deviations ``eta`` drawn from a multi-output GP whose
between-function covariance is ``Xi`` (unit diagonal, ``-1/(n-1)`` off the
diagonal). That choice of ``Xi`` forces ``sum_i eta_i(t) = 0`` at every ``t``.
Observations add iid ``N(0, sigma^2)`` noise.

Functions are always ordered regular-grid functions first (the columns of
``Y`` / ``Y_a``), followed by the irregularly sampled ones in list order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .kernel import HyperParams, gram
from .linalg import cholesky, solve_spd


def xi_matrix(n: int) -> np.ndarray:
    """Between-function covariance: 1 on the diagonal, ``-1/(n-1)`` elsewhere."""
    if n < 2:
        raise InvalidInput(f"the zero-sum constraint needs n >= 2 functions, got n={n}")
    Xi = np.full((n, n), -1.0 / (n - 1))
    np.fill_diagonal(Xi, 1.0)
    return Xi


def omega_matrix(n: int) -> np.ndarray:
    """Symmetric square root of :func:`xi_matrix`; its columns sum to zero."""
    if n < 2:
        raise InvalidInput(f"the zero-sum constraint needs n >= 2 functions, got n={n}")
    Om = np.full((n, n), -1.0 / np.sqrt(n * (n - 1)))
    np.fill_diagonal(Om, np.sqrt((n - 1) / n))
    return Om


def _grid(t, name):
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size == 0:
        raise InvalidInput(f"{name} must be nonempty")
    if not np.all(np.isfinite(t)):
        raise InvalidInput(f"{name} contains non-finite values")
    return t


def _sorted_grid(t, values, name):
    """Sort a grid (and the matching rows of ``values``); reject duplicates."""
    order = np.argsort(t, kind="stable")
    t = t[order]
    if np.any(np.diff(t) == 0):
        raise InvalidInput(f"{name} contains duplicate time points")
    return t, values[order]


@dataclass(frozen=True)
class RegularDataset:
    """All ``n`` functions observed on one shared grid ``t``; ``Y`` is ``J x n``."""

    t: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        t = _grid(self.t, "t")
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim != 2 or Y.shape[0] != t.size:
            raise InvalidInput(f"Y must be J x n with J={t.size}, got shape {Y.shape}")
        if Y.shape[1] < 2:
            raise InvalidInput(f"the zero-sum constraint needs n >= 2 functions, got n={Y.shape[1]}")
        t, Y = _sorted_grid(t, Y, "t")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "Y", Y)

    @property
    def J(self) -> int:
        return self.t.size

    @property
    def n(self) -> int:
        return self.Y.shape[1]

    @property
    def N(self) -> int:
        return self.Y.size

    @property
    def y(self) -> np.ndarray:
        """Stacked observation vector ``(y_1^T, ..., y_n^T)^T``."""
        return self.Y.reshape(-1, order="F")

    def grids(self) -> list:
        return [self.t] * self.n

    def as_partial(self) -> PartialDataset:
        return PartialDataset(self.t, self.Y, ())


@dataclass(frozen=True)
class PartialDataset:
    """``n_a`` functions on a shared grid ``t_a`` plus ``n_b`` individually sampled ones.

    ``irregular`` is a sequence of ``(t_b_i, y_b_i)`` pairs.
    """

    t_a: np.ndarray
    Y_a: np.ndarray
    irregular: tuple = field(default=())

    def __post_init__(self):
        t_a = _grid(self.t_a, "t_a")
        Y_a = np.asarray(self.Y_a, dtype=float)
        if Y_a.ndim == 1:
            Y_a = Y_a[:, None]
        if Y_a.ndim != 2 or Y_a.shape[0] != t_a.size:
            raise InvalidInput(f"Y_a must be J_a x n_a with J_a={t_a.size}, got shape {Y_a.shape}")
        if Y_a.shape[1] < 1:
            raise InvalidInput("a partial design needs n_a >= 1 regularly sampled function")
        t_a, Y_a = _sorted_grid(t_a, Y_a, "t_a")
        irregular = []
        for i, (tb, yb) in enumerate(self.irregular):
            tb = _grid(tb, f"t_b[{i}]")
            yb = np.asarray(yb, dtype=float).reshape(-1)
            if yb.size != tb.size:
                raise InvalidInput(f"irregular function {i}: {tb.size} times but {yb.size} values")
            tb, yb = _sorted_grid(tb, yb, f"t_b[{i}]")
            irregular.append((tb, yb))
        if Y_a.shape[1] + len(irregular) < 2:
            raise InvalidInput("the zero-sum constraint needs n >= 2 functions in total")
        object.__setattr__(self, "t_a", t_a)
        object.__setattr__(self, "Y_a", Y_a)
        object.__setattr__(self, "irregular", tuple(irregular))

    @property
    def J_a(self) -> int:
        return self.t_a.size

    @property
    def n_a(self) -> int:
        return self.Y_a.shape[1]

    @property
    def n_b(self) -> int:
        return len(self.irregular)

    @property
    def n(self) -> int:
        return self.n_a + self.n_b

    @property
    def t_b(self) -> list:
        return [tb for tb, _ in self.irregular]

    @property
    def N_b(self) -> int:
        return sum(tb.size for tb, _ in self.irregular)

    @property
    def N(self) -> int:
        return self.Y_a.size + self.N_b

    @property
    def y_a(self) -> np.ndarray:
        return self.Y_a.reshape(-1, order="F")

    @property
    def y_b(self) -> np.ndarray:
        if not self.irregular:
            return np.zeros(0)
        return np.concatenate([yb for _, yb in self.irregular])

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.y_a, self.y_b])

    def grids(self) -> list:
        return [self.t_a] * self.n_a + self.t_b

    def as_regular(self) -> RegularDataset:
        if self.n_b:
            raise InvalidInput("only a partial dataset without irregular functions is regular")
        return RegularDataset(self.t_a, self.Y_a)


@dataclass(frozen=True)
class Truth:
    """Latent values behind a simulated dataset, on grid ``t``.

    ``eta`` has one column per function; for partial designs ``t`` is the
    union of all sampling grids.
    """

    t: np.ndarray
    mu: np.ndarray
    eta: np.ndarray

    @property
    def f(self) -> np.ndarray:
        return self.mu[:, None] + self.eta


def _prior_factor(K):
    """Factor used to draw ``N(0, K)``; tolerates the all-zero kernel."""
    return cholesky(K, stage="prior covariance").L


def draw_latents(theta: HyperParams, t, n, rng):
    """Draw ``mu(t)`` and the ``len(t) x n`` zero-sum deviations from the prior."""
    Lmu = _prior_factor(gram(theta.mu_kernel, t, t))
    Leta = _prior_factor(gram(theta.eta_kernel, t, t))
    mu = Lmu @ rng.standard_normal(t.size)
    Z = rng.standard_normal((t.size, n))
    # eta = chol(K_eta) Z Omega^T has Xi-correlated columns that sum to zero
    eta = Leta @ Z @ omega_matrix(n).T
    return mu, eta


def simulate_regular(theta: HyperParams, t, n: int, seed=None):
    """Draw a regular dataset and its latent truth from the model."""
    if n < 2:
        raise InvalidInput(f"the zero-sum constraint needs n >= 2 functions, got n={n}")
    t = np.sort(_grid(t, "t"))
    rng = np.random.default_rng(seed)
    mu, eta = draw_latents(theta, t, n, rng)
    Y = mu[:, None] + eta + theta.noise_sd * rng.standard_normal((t.size, n))
    return RegularDataset(t, Y), Truth(t, mu, eta)


def simulate_partial(theta: HyperParams, t_a, n_a: int, t_b_list, seed=None):
    """Draw a partially regular dataset and its truth on the union grid.

    With no irregular functions this consumes the random stream exactly as
    :func:`simulate_regular` does, so both give identical data per seed.
    """
    t_b_list = [np.sort(_grid(tb, f"t_b[{i}]")) for i, tb in enumerate(t_b_list)]
    n = n_a + len(t_b_list)
    if n_a < 1:
        raise InvalidInput("a partial design needs n_a >= 1")
    if n < 2:
        raise InvalidInput(f"the zero-sum constraint needs n >= 2 functions, got n={n}")
    t_a = np.sort(_grid(t_a, "t_a"))
    t_union = np.unique(np.concatenate([t_a] + t_b_list))
    rng = np.random.default_rng(seed)
    mu, eta = draw_latents(theta, t_union, n, rng)
    ia = np.searchsorted(t_union, t_a)
    Y_a = mu[ia, None] + eta[ia, :n_a] + theta.noise_sd * rng.standard_normal((t_a.size, n_a))
    irregular = []
    for i, tb in enumerate(t_b_list):
        ib = np.searchsorted(t_union, tb)
        yb = mu[ib] + eta[ib, n_a + i] + theta.noise_sd * rng.standard_normal(tb.size)
        irregular.append((tb, yb))
    return PartialDataset(t_a, Y_a, tuple(irregular)), Truth(t_union, mu, eta)


@dataclass(frozen=True)
class RegularBlocks:
    """``Sigma0 = n/(n-1) K_eta + s^2 I`` and ``Sigma1 = n K_mu + s^2 I`` on the shared grid."""

    Sigma0: np.ndarray
    Sigma1: np.ndarray


@dataclass(frozen=True)
class PartialBlocks:
    """Blocks of the partially regular covariance.

    ``A0``/``A1`` act on the shared grid, ``Cb`` is the regular-to-irregular
    cross block, ``B`` the irregular-irregular block and ``S`` its Schur
    complement ``B - n_a Cb^T A1^{-1} Cb``. ``A1_factor`` is the Cholesky
    factor used to form ``S``.
    """

    A0: np.ndarray
    A1: np.ndarray
    Cb: np.ndarray
    B: np.ndarray
    S: np.ndarray
    A1_factor: object = None


def regular_cov_blocks(theta: HyperParams, t, n: int) -> RegularBlocks:
    if n < 2:
        raise InvalidInput(f"the zero-sum constraint needs n >= 2 functions, got n={n}")
    t = np.asarray(t, dtype=float)
    s2I = theta.noise_sd ** 2 * np.eye(t.size)
    Sigma0 = n / (n - 1) * gram(theta.eta_kernel, t, t) + s2I
    Sigma1 = n * gram(theta.mu_kernel, t, t) + s2I
    return RegularBlocks(Sigma0, Sigma1)


def irregular_block(theta: HyperParams, t_b_list, n: int) -> np.ndarray:
    """The block matrix ``B`` over the irregular functions."""
    sizes = [tb.size for tb in t_b_list]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    B = np.zeros((offsets[-1], offsets[-1]))
    s2 = theta.noise_sd ** 2
    for i, ti in enumerate(t_b_list):
        for j in range(i, len(t_b_list)):
            tj = t_b_list[j]
            Kmu = gram(theta.mu_kernel, ti, tj)
            Keta = gram(theta.eta_kernel, ti, tj)
            if i == j:
                blk = Kmu + Keta + s2 * np.eye(ti.size)
            else:
                blk = Kmu - Keta / (n - 1)
            B[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] = blk
            if i != j:
                B[offsets[j]:offsets[j + 1], offsets[i]:offsets[i + 1]] = blk.T
    return B


def partial_cov_blocks(theta: HyperParams, t_a, n_a: int, t_b_list) -> PartialBlocks:
    t_a = np.asarray(t_a, dtype=float)
    t_b_list = [np.asarray(tb, dtype=float) for tb in t_b_list]
    n_b = len(t_b_list)
    n = n_a + n_b
    if n_a < 1 or n < 2:
        raise InvalidInput(f"need n_a >= 1 and n >= 2, got n_a={n_a}, n={n}")
    s2I = theta.noise_sd ** 2 * np.eye(t_a.size)
    Kmu_aa = gram(theta.mu_kernel, t_a, t_a)
    Keta_aa = gram(theta.eta_kernel, t_a, t_a)
    A0 = n / (n - 1) * Keta_aa + s2I
    A1 = s2I + n_a * Kmu_aa + n_b / (n - 1) * Keta_aa
    A1_factor = cholesky(A1, stage="A1")
    if n_b == 0:
        empty = np.zeros((0, 0))
        return PartialBlocks(A0, A1, np.zeros((t_a.size, 0)), empty, empty, A1_factor)
    t_b = np.concatenate(t_b_list)
    Cb = gram(theta.mu_kernel, t_a, t_b) - gram(theta.eta_kernel, t_a, t_b) / (n - 1)
    B = irregular_block(theta, t_b_list, n)
    S = B - n_a * Cb.T @ solve_spd(A1_factor, Cb)
    S = 0.5 * (S + S.T)
    return PartialBlocks(A0, A1, Cb, B, S, A1_factor)


def naive_full_cov(theta: HyperParams, data) -> np.ndarray:
    """Dense covariance of the stacked observations, block by block.

    Block ``(i, j)`` is ``K_mu(t_i, t_j) + xi_ij K_eta(t_i, t_j)`` plus
    ``sigma^2 I`` on the diagonal. No structure is exploited.
    """
    grids = data.grids()
    n = len(grids)
    Xi = xi_matrix(n)
    offsets = np.concatenate([[0], np.cumsum([g.size for g in grids])]).astype(int)
    Sigma = np.empty((offsets[-1], offsets[-1]))
    s2 = theta.noise_sd ** 2
    for i in range(n):
        for j in range(i, n):
            blk = gram(theta.mu_kernel, grids[i], grids[j])
            blk += Xi[i, j] * gram(theta.eta_kernel, grids[i], grids[j])
            if i == j:
                blk.flat[:: blk.shape[1] + 1] += s2
            Sigma[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] = blk
            if i != j:
                Sigma[offsets[j]:offsets[j + 1], offsets[i]:offsets[i + 1]] = blk.T
    return Sigma
