"""Conditional posteriors of the latent processes given hyperparameters.

Coordinates of a :class:`GaussianPosterior` are labelled ``(target, k)`` where
``target`` is ``"mu"`` or ``"eta<i>"`` (1-based function index) and ``k``
indexes the prediction grid. Efficient posteriors over deviations carry only
``eta1 .. eta{n-1}``; ``eta{n}`` is recovered as minus their sum, since the
dropped block is linearly dependent on the others.

Back-ends:

* :func:`posterior_naive` conditions the dense joint Gaussian (oracle);
* :func:`posterior_mu_regular`, :func:`posterior_eta_regular` use the
  shared-grid formulas, in which mu and eta are independent a posteriori;
* :func:`posterior_joint_partial` handles the partially regular design,
  where mu and eta are correlated and must be sampled jointly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg.blas import dsyrk
from scipy.stats import norm

from .errors import InvalidInput
from .kernel import HyperParams, gram
from .likelihood import partial_solve
from .linalg import (
    CholeskyFactor,
    block_cholesky_equal,
    block_cholesky_extend,
    cholesky,
    equal_block_matrix,
    mirror_lower,
    solve_lower,
    solve_spd,
)
from .model import PartialDataset, RegularDataset, naive_full_cov, regular_cov_blocks, xi_matrix

FACTOR_BLOCK = "block"
FACTOR_DENSE = "dense"


def _sym(M):
    return 0.5 * (M + M.T)


def make_labels(targets, J_p):
    return [(target, k) for target in targets for k in range(J_p)]


def eta_targets(n, drop_last=True):
    return [f"eta{i}" for i in range(1, n if drop_last else n + 1)]


@dataclass
class GaussianPosterior:
    """Mean and Cholesky factor of a (possibly joint) Gaussian posterior.

    ``cov`` holds the assembled covariance when the back-end formed it
    explicitly; otherwise :meth:`covariance` rebuilds it from the factor.
    """

    labels: list
    mean: np.ndarray
    cov_chol: CholeskyFactor
    t_pred: np.ndarray
    n: int
    cov: np.ndarray | None = None

    def __post_init__(self):
        if not (len(self.labels) == self.mean.size == self.cov_chol.dim):
            raise InvalidInput("labels, mean and factor sizes disagree")

    @property
    def targets(self) -> list:
        seen = []
        for target, _ in self.labels:
            if not seen or seen[-1] != target:
                seen.append(target)
        return seen

    def index(self, target) -> slice:
        J_p = self.t_pred.size
        pos = self.targets.index(target)
        return slice(pos * J_p, (pos + 1) * J_p)

    def covariance(self) -> np.ndarray:
        if self.cov is not None:
            return self.cov
        return self.cov_chol.dense()

    def marginal_sd(self) -> np.ndarray:
        if self.cov is not None:
            var = np.diag(self.cov)
        else:
            var = np.einsum("ij,ij->i", self.cov_chol.L, self.cov_chol.L)
        return np.sqrt(np.maximum(var, 0.0))


# ---------------------------------------------------------------------------
# naive oracle


def _parse_target(target, n):
    if target == "mu":
        return None
    if target.startswith("eta"):
        i = int(target[3:])
        if 1 <= i <= n:
            return i - 1
    raise InvalidInput(f"unknown posterior target {target!r} for n={n}")


def _prior_tt(theta, t_pred, idx, n):
    Xi = xi_matrix(n)
    J_p = t_pred.size
    Kmu_pp = gram(theta.mu_kernel, t_pred, t_pred)
    Keta_pp = gram(theta.eta_kernel, t_pred, t_pred)
    C_tt = np.zeros((len(idx) * J_p, len(idx) * J_p), order="F")
    for a, ia in enumerate(idx):
        for b, ib in enumerate(idx):
            rows, cols = slice(a * J_p, (a + 1) * J_p), slice(b * J_p, (b + 1) * J_p)
            if ia is None and ib is None:
                C_tt[rows, cols] = Kmu_pp
            elif ia is not None and ib is not None:
                C_tt[rows, cols] = Xi[ia, ib] * Keta_pp
    return C_tt


def _cross_yt(theta, grids, t_pred, idx):
    n = len(grids)
    Xi = xi_matrix(n)
    J_p = t_pred.size
    offsets = np.concatenate([[0], np.cumsum([g.size for g in grids])]).astype(int)
    # Fortran order so triangular solves do not copy
    C_yt = np.zeros((offsets[-1], len(idx) * J_p), order="F")
    for j, tj in enumerate(grids):
        Kmu = gram(theta.mu_kernel, tj, t_pred)
        Keta = gram(theta.eta_kernel, tj, t_pred)
        for a, ia in enumerate(idx):
            blk = Kmu if ia is None else Xi[j, ia] * Keta
            C_yt[offsets[j]:offsets[j + 1], a * J_p:(a + 1) * J_p] = blk
    return C_yt


def joint_prior(theta: HyperParams, data, t_pred, targets):
    """Prior covariance of the targets and their cross-covariance with ``y``.

    Returns ``(C_tt, C_yt)`` built block by block from the model definition.
    """
    t_pred = np.asarray(t_pred, dtype=float).reshape(-1)
    grids = data.grids()
    n = len(grids)
    idx = [_parse_target(tg, n) for tg in targets]
    return _prior_tt(theta, t_pred, idx, n), _cross_yt(theta, grids, t_pred, idx)


def posterior_naive(theta: HyperParams, data, t_pred, targets=None, keep_cov=True) -> GaussianPosterior:
    """Dense Gaussian conditioning of the requested targets on all observations.

    Parameters
    ----------
    targets : list of str, optional
        Any of ``"mu"``, ``"eta1"`` .. ``"eta<n>"``. Defaults to
        ``eta1 .. eta{n-1}`` followed by ``mu``.
    keep_cov : bool
        Store the posterior covariance next to its factor. Turning this off
        saves one dense copy for large benchmarks.
    """
    t_pred = np.asarray(t_pred, dtype=float).reshape(-1)
    if t_pred.size == 0:
        raise InvalidInput("t_pred must be nonempty")
    grids = data.grids()
    n = len(grids)
    if targets is None:
        targets = eta_targets(n) + ["mu"]
    idx = [_parse_target(tg, n) for tg in targets]
    Sigma = naive_full_cov(theta, data)
    L = cholesky(Sigma, stage="Sigma", check_symmetric=False)
    del Sigma
    alpha = solve_lower(L, data.y)
    C_yt = _cross_yt(theta, grids, t_pred, idx)
    X = solve_lower(L, C_yt)
    del C_yt, L
    mean = X.T @ alpha
    # C_tt - X^T X, lower triangle only, then mirrored
    cov = dsyrk(-1.0, X, beta=1.0, c=_prior_tt(theta, t_pred, idx, n), trans=1, lower=1, overwrite_c=1)
    del X
    mirror_lower(cov)
    factor = cholesky(cov, stage="posterior covariance", check_symmetric=False)
    return GaussianPosterior(
        make_labels(targets, t_pred.size), mean, factor, t_pred, n, cov if keep_cov else None
    )


# ---------------------------------------------------------------------------
# completely regular design


@dataclass
class RegularFactors:
    """Cholesky factors of ``Sigma0`` and ``Sigma1`` reused across posteriors."""

    L0: CholeskyFactor
    L1: CholeskyFactor

    @classmethod
    def compute(cls, theta, data):
        blocks = regular_cov_blocks(theta, data.t, data.n)
        return cls(
            cholesky(blocks.Sigma0, stage="Sigma0", check_symmetric=False),
            cholesky(blocks.Sigma1, stage="Sigma1", check_symmetric=False),
        )


def _check_regular(data, t_pred):
    if not isinstance(data, RegularDataset):
        raise InvalidInput("this posterior needs a RegularDataset")
    t_pred = np.asarray(t_pred, dtype=float).reshape(-1)
    if t_pred.size == 0:
        raise InvalidInput("t_pred must be nonempty")
    return t_pred


def posterior_mu_regular(theta: HyperParams, data: RegularDataset, t_pred, factors=None) -> GaussianPosterior:
    """Posterior of ``mu(t_pred)``; needs only the factor of ``Sigma1``.

    Mean ``K_mu(t~, t) Sigma1^{-1} Y 1_n`` and covariance
    ``K_mu(t~, t~) - n K_mu(t~, t) Sigma1^{-1} K_mu(t, t~)``.
    """
    t_pred = _check_regular(data, t_pred)
    if factors is None:
        factors = RegularFactors.compute(theta, data)
    L1 = factors.L1
    K_pt = gram(theta.mu_kernel, t_pred, data.t)
    mean = K_pt @ solve_spd(L1, data.Y.sum(axis=1))
    X = solve_lower(L1, K_pt.T)
    cov = _sym(gram(theta.mu_kernel, t_pred, t_pred) - data.n * X.T @ X)
    factor = cholesky(cov, stage="mu posterior", check_symmetric=False)
    return GaussianPosterior(make_labels(["mu"], t_pred.size), mean, factor, t_pred, data.n, cov)


def eta_regular_moments(theta: HyperParams, data: RegularDataset, t_pred, factors=None):
    """Posterior mean of all ``n`` deviations and the ``(V, W)`` covariance blocks.

    Returns ``(mean, V, W)`` with ``mean`` of shape ``(J_p, n)``. The
    covariance of any ``m`` of the deviations is the ``m``-block matrix with
    ``V`` on the diagonal and ``W`` off it.
    """
    t_pred = _check_regular(data, t_pred)
    if factors is None:
        factors = RegularFactors.compute(theta, data)
    n = data.n
    c = 1.0 / (n - 1)
    K_pt = gram(theta.eta_kernel, t_pred, data.t)
    K_pp = gram(theta.eta_kernel, t_pred, t_pred)
    KS0Y = K_pt @ solve_spd(factors.L0, data.Y)
    mean = c * (n * KS0Y - KS0Y.sum(axis=1, keepdims=True))
    X = solve_lower(factors.L0, K_pt.T)
    G0 = _sym(X.T @ X)
    W = c * (n * c * G0 - K_pp)
    V = W + n * c * (K_pp - n * c * G0)
    return mean, _sym(V), W


def posterior_eta_regular(
    theta: HyperParams, data: RegularDataset, t_pred, factors=None, factor=FACTOR_BLOCK, dense_cov=False
) -> GaussianPosterior:
    """Posterior of ``eta1 .. eta{n-1}`` at ``t_pred``.

    ``factor="block"`` uses the equal-block Cholesky; ``"dense"`` assembles
    the ``(n-1) J_p`` covariance and factors it directly.
    """
    t_pred = _check_regular(data, t_pred)
    mean_all, V, W = eta_regular_moments(theta, data, t_pred, factors)
    n = data.n
    mean = mean_all[:, : n - 1].reshape(-1, order="F")
    cov = None
    if factor == FACTOR_BLOCK:
        L = block_cholesky_equal(n - 1, V, W, stage="eta posterior")
        if dense_cov:
            cov = equal_block_matrix(n - 1, V, W)
    elif factor == FACTOR_DENSE:
        cov = equal_block_matrix(n - 1, V, W)
        L = cholesky(cov, stage="eta posterior", check_symmetric=False)
        if not dense_cov:
            cov = None
    else:
        raise InvalidInput(f"unknown factor method {factor!r}")
    return GaussianPosterior(make_labels(eta_targets(n), t_pred.size), mean, L, t_pred, n, cov)


def posterior_regular(theta, data, t_pred, factor=FACTOR_BLOCK, dense_cov=False):
    """Independent ``(mu, eta')`` posteriors sharing one pair of factorizations."""
    factors = RegularFactors.compute(theta, data)
    return (
        posterior_mu_regular(theta, data, t_pred, factors),
        posterior_eta_regular(theta, data, t_pred, factors, factor=factor, dense_cov=dense_cov),
    )


# ---------------------------------------------------------------------------
# partially regular design


def _blocks_of(M, sizes):
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return [M[:, offsets[i]:offsets[i + 1]] for i in range(len(sizes))]


def partial_moments(theta: HyperParams, data: PartialDataset, t_pred):
    """Mean and covariance pieces of the joint ``(eta, mu)`` posterior.

    Returns a dict with

    ``eta_mean`` (``J_p x n``), ``mu_mean``, ``V``/``W`` (equal blocks over
    the regular functions), ``ab`` (list over irregular functions of the
    regular-to-irregular block, identical for every regular function),
    ``bb`` (``n_b J_p`` square), ``mu_cov`` and ``cross_a``/``cross_b``
    (covariance of ``mu`` with one regular deviation, and with each irregular
    one).

    Notation: ``c = 1/(n-1)``, ``R = A1^{-1} Cb``. For a target ``u`` let
    ``g_u = C_{u,a} A^{-1} C^T - C_{u,b}``; the Schur terms of every
    posterior covariance are then ``g_u S^{-1} g_v^T``.
    """
    t_pred = np.asarray(t_pred, dtype=float).reshape(-1)
    if t_pred.size == 0:
        raise InvalidInput("t_pred must be nonempty")
    ps = partial_solve(theta, data)
    Cb = ps.blocks.Cb
    n_a, n_b, n = data.n_a, data.n_b, data.n
    c = 1.0 / (n - 1)
    J_p = t_pred.size
    sizes = [tb.size for tb in data.t_b]
    t_b = np.concatenate(data.t_b) if n_b else np.zeros(0)

    Kmu_pp = gram(theta.mu_kernel, t_pred, t_pred)
    Keta_pp = gram(theta.eta_kernel, t_pred, t_pred)
    Kmu_pa = gram(theta.mu_kernel, t_pred, data.t_a)
    Keta_pa = gram(theta.eta_kernel, t_pred, data.t_a)
    if n_b:
        Kmu_pb = gram(theta.mu_kernel, t_pred, t_b)
        Keta_pb = gram(theta.eta_kernel, t_pred, t_b)
    else:
        Kmu_pb = Keta_pb = np.zeros((J_p, 0))
    R = solve_spd(ps.L1, Cb)

    # means
    mu_mean = Kmu_pa @ ps.P1y.sum(axis=1) + Kmu_pb @ ps.P2y
    h_a = Keta_pa @ ps.P1y
    h_sum = h_a.sum(axis=1)
    q = np.column_stack([B @ p for B, p in zip(_blocks_of(Keta_pb, sizes), np.split(ps.P2y, np.cumsum(sizes)[:-1]))]) \
        if n_b else np.zeros((J_p, 0))
    q_sum = q.sum(axis=1)
    eta_mean = np.empty((J_p, n))
    eta_mean[:, :n_a] = n * c * h_a - (c * (h_sum + q_sum))[:, None]
    eta_mean[:, n_a:] = n * c * q - (c * (h_sum + q_sum))[:, None]

    # shared-grid quadratic forms
    X0 = solve_lower(ps.L0, Keta_pa.T)
    X1 = solve_lower(ps.L1, Keta_pa.T)
    G0 = _sym(X0.T @ X0)
    G1 = _sym(X1.T @ X1)
    Xmu = solve_lower(ps.L1, Kmu_pa.T)
    mu_A1_mu = _sym(Xmu.T @ Xmu)

    # g_u for the regular deviations, each irregular deviation, and mu
    E = Keta_pa @ R
    g_a = n_b * c * E + c * Keta_pb
    g_b = []
    for m, blk in enumerate(_blocks_of(Keta_pb, sizes)):
        g = -n_a * c * E + c * Keta_pb
        g[:, sum(sizes[:m]):sum(sizes[:m + 1])] -= n * c * blk
        g_b.append(g)
    g_mu = n_a * Kmu_pa @ R - Kmu_pb
    if n_b:
        Xg = solve_lower(ps.LS, np.vstack([g_a] + g_b + [g_mu]).T)
        Q = Xg.T @ Xg
    else:
        Q = np.zeros(((n_b + 2) * J_p, (n_b + 2) * J_p))

    def q_block(u, v):
        return Q[u * J_p:(u + 1) * J_p, v * J_p:(v + 1) * J_p]

    i_mu = n_b + 1

    # deviations over the regular functions: I (x) (V - W) + 1 (x) W
    aa_diff = c * c * (n_a - 2 * n)
    V_minus_W = n * c * Keta_pp - (n * c) ** 2 * G0
    W = -c * Keta_pp - aa_diff * G0 - (n_b * c) ** 2 / n_a * (G1 - G0) - q_block(0, 0)
    W = _sym(W)
    V = _sym(W + V_minus_W)

    # regular-to-irregular blocks and irregular-irregular blocks
    # not symmetric in general
    ab = [-c * Keta_pp + n_b * c * c * G1 - q_block(0, 1 + m) for m in range(n_b)]
    bb = np.zeros((n_b * J_p, n_b * J_p))
    for m in range(n_b):
        for l in range(n_b):
            prior = (1.0 if m == l else -c) * Keta_pp
            bb[m * J_p:(m + 1) * J_p, l * J_p:(l + 1) * J_p] = prior - n_a * c * c * G1 - q_block(1 + m, 1 + l)
    bb = _sym(bb)

    # mu: K(t~,t~) - C^{mu,a} A^{-1} C^{mu,a T} - Schur terms
    mu_cov = _sym(Kmu_pp - n_a * mu_A1_mu - q_block(i_mu, i_mu))

    # cross-covariance of mu with the deviations: -(C^{mu,a} P1 + C^{mu,b} P2) C^{y,eta}
    # with C^{mu,a} P1 = [H1 + H2, H3] and C^{mu,b} P2 = [-Kmu_pb S^{-1} C A^{-1}, Kmu_pb S^{-1}]
    if n_b:
        KmuR = Kmu_pa @ R
        H3 = -n_a * solve_spd(ps.LS, KmuR.T).T
        Kmu_Sinv = solve_spd(ps.LS, Kmu_pb.T).T
    else:
        H3 = Kmu_Sinv = np.zeros((J_p, 0))
    H1 = solve_spd(ps.L1, Kmu_pa.T).T
    H2 = -H3 @ R.T
    M_a = H1 + H2 - Kmu_Sinv @ R.T
    M_b = H3 + Kmu_Sinv
    MaK = M_a @ Keta_pa.T
    cross_a = -(n_b * c * MaK - c * M_b @ Keta_pb.T)
    cross_b = []
    for m, blk in enumerate(_blocks_of(Keta_pb, sizes)):
        sl = slice(sum(sizes[:m]), sum(sizes[:m + 1]))
        cross_b.append(-(-n_a * c * MaK - c * M_b @ Keta_pb.T + n * c * M_b[:, sl] @ blk.T))

    return {
        "t_pred": t_pred,
        "eta_mean": eta_mean,
        "mu_mean": mu_mean,
        "V": V,
        "W": W,
        "ab": ab,
        "bb": bb,
        "mu_cov": mu_cov,
        "cross_a": cross_a,
        "cross_b": cross_b,
        "jitter": ps.jitter,
    }


def _assemble_joint(mom, n_a, n_b):
    """Dense covariance of ``(eta1..eta{n-1}, mu)`` from the structured pieces."""
    J_p = mom["t_pred"].size
    n = n_a + n_b
    keep_a = n_a if n_b else n_a - 1
    keep_b = max(n_b - 1, 0)
    dim = n * J_p
    cov = np.zeros((dim, dim))
    ka = keep_a * J_p
    cov[:ka, :ka] = equal_block_matrix(keep_a, mom["V"], mom["W"])
    for m in range(keep_b):
        rows = slice(ka + m * J_p, ka + (m + 1) * J_p)
        block = np.tile(mom["ab"][m], (keep_a, 1))
        cov[:ka, rows] = block
        cov[rows, :ka] = block.T
    kb = keep_b * J_p
    cov[ka:ka + kb, ka:ka + kb] = mom["bb"][:kb, :kb]
    cross = np.hstack([mom["cross_a"]] * keep_a + mom["cross_b"][:keep_b])
    cov[-J_p:, : dim - J_p] = cross
    cov[: dim - J_p, -J_p:] = cross.T
    cov[-J_p:, -J_p:] = mom["mu_cov"]
    return _sym(cov)


def posterior_joint_partial(theta: HyperParams, data: PartialDataset, t_pred, factor=FACTOR_BLOCK) -> GaussianPosterior:
    """Joint posterior of ``(eta1..eta{n-1}, mu)`` under the partially regular design.

    With ``factor="block"`` the Cholesky factor is assembled in stages:
    equal-block factorization over the regular deviations, one extension for
    the kept irregular deviations, and a final extension for ``mu``.
    """
    if isinstance(data, RegularDataset):
        data = data.as_partial()
    mom = partial_moments(theta, data, t_pred)
    t_pred = mom["t_pred"]
    J_p = t_pred.size
    n_a, n_b, n = data.n_a, data.n_b, data.n
    keep_a = n_a if n_b else n_a - 1
    keep_b = max(n_b - 1, 0)
    cov = _assemble_joint(mom, n_a, n_b)
    mean = np.concatenate([mom["eta_mean"][:, : n - 1].reshape(-1, order="F"), mom["mu_mean"]])
    if factor == FACTOR_BLOCK:
        L = block_cholesky_equal(keep_a, mom["V"], mom["W"], stage="regular deviations")
        k = keep_a * J_p
        if keep_b:
            kb = keep_b * J_p
            L = block_cholesky_extend(L, cov[k:k + kb, :k], cov[k:k + kb, k:k + kb], stage="irregular deviations")
            k += kb
        L = block_cholesky_extend(L, cov[k:, :k], cov[k:, k:], stage="mean function")
    elif factor == FACTOR_DENSE:
        L = cholesky(cov, stage="joint posterior", check_symmetric=False)
    else:
        raise InvalidInput(f"unknown factor method {factor!r}")
    labels = make_labels(eta_targets(n) + ["mu"], J_p)
    return GaussianPosterior(labels, mean, L, t_pred, n, cov)


def posterior(theta, data, t_pred, backend="efficient"):
    """Design-appropriate posterior: a tuple of posteriors for :func:`sample_f`.

    ``backend`` is ``"naive"``, ``"efficient"`` or ``"intermediary"`` (the
    efficient moments with a dense factorization).
    """
    if backend in ("naive", "baseline"):
        return (posterior_naive(theta, data, t_pred),)
    if backend not in ("efficient", "intermediary", "intermediary_efficient"):
        raise InvalidInput(f"unknown posterior backend {backend!r}")
    factor = FACTOR_BLOCK if backend == "efficient" else FACTOR_DENSE
    if isinstance(data, RegularDataset):
        return posterior_regular(theta, data, t_pred, factor=factor)
    return (posterior_joint_partial(theta, data, t_pred, factor=factor),)


# ---------------------------------------------------------------------------
# sampling and bands


@dataclass
class FunctionDraws:
    """Posterior draws on ``t``: ``mu`` is ``(d, J_p)``, ``eta`` is ``(d, n, J_p)``."""

    t: np.ndarray
    mu: np.ndarray
    eta: np.ndarray

    @property
    def f(self) -> np.ndarray:
        return self.mu[:, None, :] + self.eta

    @property
    def n_draws(self) -> int:
        return self.mu.shape[0]


def _as_tuple(posteriors):
    if isinstance(posteriors, GaussianPosterior):
        return (posteriors,)
    return tuple(posteriors)


def _check_coverage(posteriors):
    posteriors = _as_tuple(posteriors)
    if not posteriors:
        raise InvalidInput("no posterior given")
    n = posteriors[0].n
    J_p = posteriors[0].t_pred.size
    have = {}
    for p_i, post in enumerate(posteriors):
        if post.n != n or post.t_pred.size != J_p:
            raise InvalidInput("posteriors disagree on n or the prediction grid")
        for target in post.targets:
            have[target] = p_i
    needed = ["mu"] + eta_targets(n)
    missing = [tg for tg in needed if tg not in have]
    if missing:
        raise InvalidInput(f"posterior does not cover targets {missing}")
    return posteriors, n, J_p


def sample_f(posteriors, n_draws=1, seed=None, rng=None) -> FunctionDraws:
    """Draw ``mu`` and every ``eta_i`` (hence ``f_i = mu + eta_i``) from a posterior.

    ``posteriors`` is one joint posterior or several independent ones (the
    regular design's ``(mu, eta')`` pair); each is sampled as
    ``mean + L z`` with fresh standard normal ``z`` per draw. ``eta_n`` is
    minus the sum of the others.
    """
    posteriors, n, J_p = _check_coverage(posteriors)
    if rng is None:
        rng = np.random.default_rng(seed)
    mu = np.zeros((n_draws, J_p))
    eta = np.zeros((n_draws, n, J_p))
    for post in posteriors:
        z = rng.standard_normal((post.mean.size, n_draws))
        x = post.mean[:, None] + post.cov_chol.L @ z
        for target in post.targets:
            block = x[post.index(target)].T
            if target == "mu":
                mu = block
            else:
                i = int(target[3:]) - 1
                if i < n - 1:
                    eta[:, i, :] = block
    eta[:, n - 1, :] = -eta[:, : n - 1, :].sum(axis=1)
    return FunctionDraws(posteriors[0].t_pred, mu, eta)


def credible_band(source, level=0.9):
    """Pointwise credible band.

    A :class:`GaussianPosterior` gives analytic bands ``mean -/+ z sd`` per
    coordinate. An array of draws (draws along axis 0) gives empirical
    quantile bands.
    """
    if not 0.0 < level < 1.0:
        raise InvalidInput(f"level must be in (0, 1), got {level}")
    if isinstance(source, GaussianPosterior):
        z = norm.ppf(0.5 * (1.0 + level))
        sd = source.marginal_sd()
        return source.mean - z * sd, source.mean + z * sd
    draws = np.asarray(source, dtype=float)
    lo, hi = np.quantile(draws, [0.5 * (1.0 - level), 0.5 * (1.0 + level)], axis=0)
    return lo, hi


def function_marginals(posteriors):
    """Posterior means and standard deviations of ``mu`` and each ``f_i``.

    Returns ``(mu_mean, mu_sd, f_mean, f_sd)`` with the ``f`` arrays of shape
    ``(n, J_p)``. Variances are exact quadratic forms in the Cholesky rows,
    so cross-covariances within a joint posterior are accounted for.
    """
    posteriors, n, J_p = _check_coverage(posteriors)
    mu_mean = np.zeros(J_p)
    eta_mean = np.zeros((n, J_p))
    mu_var = np.zeros(J_p)
    f_var = np.zeros((n, J_p))
    for post in posteriors:
        L = post.cov_chol.L
        rows_mu = np.zeros((J_p, L.shape[1]))
        rows_eta = np.zeros((n - 1, J_p, L.shape[1]))
        for target in post.targets:
            sl = post.index(target)
            if target == "mu":
                rows_mu = L[sl]
                mu_mean = post.mean[sl]
            else:
                i = int(target[3:]) - 1
                if i < n - 1:
                    rows_eta[i] = L[sl]
                    eta_mean[i] = post.mean[sl]
        mu_var += np.einsum("ij,ij->i", rows_mu, rows_mu)
        for i in range(n - 1):
            r = rows_mu + rows_eta[i]
            f_var[i] += np.einsum("ij,ij->i", r, r)
        r = rows_mu - rows_eta.sum(axis=0)
        f_var[n - 1] += np.einsum("ij,ij->i", r, r)
    eta_mean[n - 1] = -eta_mean[: n - 1].sum(axis=0)
    f_mean = mu_mean[None, :] + eta_mean
    return mu_mean, np.sqrt(mu_var), f_mean, np.sqrt(f_var)


def function_bands(posteriors, level=0.9):
    """Analytic bands for ``mu`` and every ``f_i``.

    Returns a dict ``target -> (mean, lower, upper)`` with keys ``"mu"``,
    ``"f1"`` .. ``"f<n>"``.
    """
    if not 0.0 < level < 1.0:
        raise InvalidInput(f"level must be in (0, 1), got {level}")
    z = norm.ppf(0.5 * (1.0 + level))
    mu_mean, mu_sd, f_mean, f_sd = function_marginals(posteriors)
    bands = {"mu": (mu_mean, mu_mean - z * mu_sd, mu_mean + z * mu_sd)}
    for i in range(f_mean.shape[0]):
        bands[f"f{i + 1}"] = (f_mean[i], f_mean[i] - z * f_sd[i], f_mean[i] + z * f_sd[i])
    return bands
