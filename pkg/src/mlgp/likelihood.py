"""Log-likelihood of the observed data under the multi-level model.

Three back-ends compute the same number:

* :func:`loglik_naive` factors the dense ``N x N`` covariance;
* :func:`loglik_regular` uses the two ``J x J`` matrices ``Sigma0``/``Sigma1``
  of the shared-grid design;
* :func:`loglik_partial` uses ``A0``, ``A1`` on the shared grid and the Schur
  complement ``S`` over the irregularly sampled functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NotPositiveDefinite
from .kernel import HyperParams
from .linalg import chol_logdet, cholesky, solve_lower, solve_spd, vec
from .model import (
    PartialDataset,
    RegularDataset,
    naive_full_cov,
    partial_cov_blocks,
    regular_cov_blocks,
)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LogLikResult:
    """``value = -0.5 * (const + logdet + quad_form)``."""

    value: float
    logdet: float
    quad_form: float
    const: float
    jitter_used: float = 0.0

    @classmethod
    def from_parts(cls, N, logdet, quad_form, jitter_used=0.0):
        const = N * _LOG_2PI
        return cls(-0.5 * (const + logdet + quad_form), logdet, quad_form, const, jitter_used)


def _factor(M, stage):
    """Cholesky factor that must be nonsingular (a density needs a finite log-determinant)."""
    L = cholesky(M, stage=stage, check_symmetric=False)
    if L.dim and not np.all(np.diag(L.L) > 0.0):
        raise NotPositiveDefinite("matrix is singular", stage)
    return L


def loglik_naive(theta: HyperParams, data) -> LogLikResult:
    """Dense baseline: one Cholesky of the full covariance."""
    Sigma = naive_full_cov(theta, data)
    L = _factor(Sigma, "Sigma")
    del Sigma
    alpha = solve_lower(L, data.y)
    return LogLikResult.from_parts(data.N, chol_logdet(L), float(alpha @ alpha), L.jitter)


def regular_solve(L0, L1, Y) -> np.ndarray:
    """``unvec(Sigma_Theta^{-1} y)`` for the regular design, as a ``J x n`` matrix.

    Equals ``Sigma0^{-1} Y + (1/n) (Sigma1^{-1} - Sigma0^{-1}) Y 1_{n,n}``.
    """
    n = Y.shape[1]
    S0Y = solve_spd(L0, Y)
    row_sum = Y.sum(axis=1)
    correction = (solve_spd(L1, row_sum) - S0Y.sum(axis=1)) / n
    return S0Y + correction[:, None]


def loglik_regular(theta: HyperParams, data: RegularDataset) -> LogLikResult:
    """Shared-grid log-likelihood from two ``J x J`` factorizations.

    ``log|Sigma| = (n-1) log|Sigma0| + log|Sigma1|``.
    """
    if not isinstance(data, RegularDataset):
        raise InvalidInput("loglik_regular needs a RegularDataset")
    n = data.n
    blocks = regular_cov_blocks(theta, data.t, n)
    L0 = _factor(blocks.Sigma0, "Sigma0")
    L1 = _factor(blocks.Sigma1, "Sigma1")
    logdet = (n - 1) * chol_logdet(L0) + chol_logdet(L1)
    Sinv_y = vec(regular_solve(L0, L1, data.Y))
    quad = float(data.y @ Sinv_y)
    return LogLikResult.from_parts(data.N, logdet, quad, max(L0.jitter, L1.jitter))


@dataclass
class PartialSolve:
    """Factors and ``Sigma^{-1} y`` pieces shared by likelihood and posterior.

    ``P1y`` is ``unvec`` of the regular part of ``Sigma^{-1} y`` (``J_a x n_a``)
    and ``P2y`` its irregular part.
    """

    blocks: object
    L0: object
    L1: object
    LS: object
    P1y: np.ndarray
    P2y: np.ndarray

    @property
    def jitter(self) -> float:
        return max(self.L0.jitter, self.L1.jitter, self.LS.jitter)


def partial_solve(theta: HyperParams, data: PartialDataset) -> PartialSolve:
    n_a = data.n_a
    blocks = partial_cov_blocks(theta, data.t_a, n_a, data.t_b)
    L0 = _factor(blocks.A0, "A0")
    L1 = blocks.A1_factor
    if L1.dim and not np.all(np.diag(L1.L) > 0.0):
        raise NotPositiveDefinite("matrix is singular", "A1")
    LS = _factor(blocks.S, "S")
    # A^{-1} y^a keeps the two-Kronecker structure with (A0, A1) in place of (Sigma0, Sigma1)
    Z = regular_solve(L0, L1, data.Y_a)
    if data.n_b == 0:
        return PartialSolve(blocks, L0, L1, LS, Z, np.zeros(0))
    # C A^{-1} y^a = Cb^T Z 1_{n_a}
    CAy = blocks.Cb.T @ Z.sum(axis=1)
    P2y = solve_spd(LS, data.y_b - CAy)
    # A^{-1} C^T = 1_{n_a} (x) A1^{-1} Cb
    P1y = Z - solve_spd(L1, blocks.Cb @ P2y)[:, None]
    return PartialSolve(blocks, L0, L1, LS, P1y, P2y)


def loglik_partial(theta: HyperParams, data: PartialDataset) -> LogLikResult:
    """Partially regular log-likelihood.

    ``log|Sigma| = (n_a-1) log|A0| + log|A1| + log|S|``. Without irregular
    functions the computation reduces to :func:`loglik_regular`.
    """
    if isinstance(data, RegularDataset):
        data = data.as_partial()
    if data.n_b == 0:
        return loglik_regular(theta, data.as_regular())
    ps = partial_solve(theta, data)
    logdet = (data.n_a - 1) * chol_logdet(ps.L0) + chol_logdet(ps.L1) + chol_logdet(ps.LS)
    quad = float(data.y_a @ vec(ps.P1y) + data.y_b @ ps.P2y)
    return LogLikResult.from_parts(data.N, logdet, quad, ps.jitter)


def loglik(theta: HyperParams, data, backend="efficient") -> LogLikResult:
    """Dispatch on design and back-end (``"naive"`` or ``"efficient"``)."""
    if backend in ("naive", "baseline"):
        return loglik_naive(theta, data)
    if backend != "efficient":
        raise InvalidInput(f"unknown likelihood backend {backend!r}")
    if isinstance(data, RegularDataset):
        return loglik_regular(theta, data)
    return loglik_partial(theta, data)


__all__ = [
    "LogLikResult",
    "loglik",
    "loglik_naive",
    "loglik_partial",
    "loglik_regular",
    "partial_solve",
    "regular_solve",
]
