"""Cholesky-based primitives and structured factorizations.

All matrices are dense numpy arrays. Factorizations return a
:class:`CholeskyFactor`, which carries the lower-triangular factor together
with the diagonal jitter (if any) that had to be added to make the
factorization succeed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import InvalidInput, NotPositiveDefinite, NumericalOverflow

#: Relative jitter levels tried, in order, when a factorization fails.
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)

_SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular ``L`` with ``L @ L.T == A + jitter * I``."""

    L: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    def dense(self) -> np.ndarray:
        """Reconstruct ``L @ L.T``."""
        return self.L @ self.L.T


def _as_lower(L) -> np.ndarray:
    if isinstance(L, CholeskyFactor):
        return L.L
    return np.asarray(L, dtype=float)


def _check_symmetric(A, stage):
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
    # row chunks keep the temporary small for very large matrices
    step = max(1, 2 ** 22 // max(A.shape[0], 1))
    for start in range(0, A.shape[0], step):
        stop = min(start + step, A.shape[0])
        if np.max(np.abs(A[start:stop] - A[:, start:stop].T)) > _SYMMETRY_RTOL * scale:
            raise InvalidInput(f"{stage or 'matrix'} is not symmetric")


def cholesky(A, jitter_ladder=JITTER_LADDER, stage=None, check_symmetric=True) -> CholeskyFactor:
    """Cholesky factor of a symmetric positive definite matrix.

    On failure the factorization is retried with ``delta * mean(diag(A))``
    added to the diagonal for each ``delta`` in ``jitter_ladder``. An
    all-zero matrix factors to the all-zero ``L``.

    Raises
    ------
    InvalidInput
        If ``A`` is not square or not symmetric.
    NotPositiveDefinite
        If every rung of the jitter ladder fails.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"cholesky needs a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return CholeskyFactor(np.zeros((0, 0)))
    if check_symmetric:
        _check_symmetric(A, stage)
    scale = float(np.mean(np.diag(A)))
    if scale == 0.0 and not np.any(A):
        return CholeskyFactor(np.zeros_like(A))
    for delta in jitter_ladder:
        if delta == 0.0:
            M = A
        else:
            if not scale > 0.0:
                break
            M = A.copy()
            M.flat[:: M.shape[0] + 1] += delta * scale
        L, info = lapack.dpotrf(M, lower=1, clean=1, overwrite_a=0)
        del M
        if info == 0:
            return CholeskyFactor(L, delta * scale if delta else 0.0)
        if info < 0:
            raise InvalidInput(f"dpotrf rejected argument {-info}")
    raise NotPositiveDefinite("matrix is not positive definite (jitter ladder exhausted)", stage)


def mirror_lower(A, block=512) -> np.ndarray:
    """Copy the strict lower triangle of ``A`` onto its upper triangle, in place."""
    m = A.shape[0]
    for i0 in range(0, m, block):
        i1 = min(i0 + block, m)
        A[i0:i1, i1:] = A[i1:, i0:i1].T
        diag = A[i0:i1, i0:i1]
        iu = np.triu_indices(i1 - i0, 1)
        diag[iu] = diag.T[iu]
    return A


def chol_logdet(L) -> float:
    """``log|L L^T|`` as twice the sum of log-diagonal entries."""
    L = _as_lower(L)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def solve_lower(L, B) -> np.ndarray:
    """Solve ``L X = B`` by forward substitution."""
    L = _as_lower(L)
    B = np.asarray(B, dtype=float)
    if L.shape[0] != B.shape[0]:
        raise InvalidInput(f"dimension mismatch: L is {L.shape}, B has {B.shape[0]} rows")
    if L.shape[0] == 0:
        return np.zeros_like(B)
    X = solve_triangular(L, B, lower=True, check_finite=False)
    if not np.all(np.isfinite(X)):
        raise NumericalOverflow("forward substitution produced non-finite values")
    return X


def solve_upper_t(L, B) -> np.ndarray:
    """Solve ``L^T X = B`` by back substitution."""
    L = _as_lower(L)
    B = np.asarray(B, dtype=float)
    if L.shape[0] != B.shape[0]:
        raise InvalidInput(f"dimension mismatch: L is {L.shape}, B has {B.shape[0]} rows")
    if L.shape[0] == 0:
        return np.zeros_like(B)
    X = solve_triangular(L, B, lower=True, trans="T", check_finite=False)
    if not np.all(np.isfinite(X)):
        raise NumericalOverflow("back substitution produced non-finite values")
    return X


def solve_spd(L, B) -> np.ndarray:
    """``M^{-1} B`` for ``M = L L^T`` using one forward and one back solve."""
    return solve_upper_t(L, solve_lower(L, B))


def vec(M) -> np.ndarray:
    """Stack the columns of ``M`` into one vector."""
    return np.asarray(M).reshape(-1, order="F")


def unvec(v, J, n) -> np.ndarray:
    """Inverse of :func:`vec`: column ``i`` is the ``i``-th length-``J`` chunk of ``v``."""
    v = np.asarray(v)
    if v.size != J * n:
        raise InvalidInput(f"cannot reshape vector of length {v.size} into {J}x{n}")
    return v.reshape((J, n), order="F")


def equal_block_matrix(n_blocks, V, W) -> np.ndarray:
    """Dense ``I_n (x) (V - W) + 1_{n,n} (x) W``."""
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    return np.kron(np.eye(n_blocks), V - W) + np.kron(np.ones((n_blocks, n_blocks)), W)


def block_cholesky_equal(n_blocks, V, W, jitter_ladder=JITTER_LADDER, stage=None) -> CholeskyFactor:
    """Cholesky factor of the block matrix with ``V`` on the diagonal and ``W`` elsewhere.

    The factor is built one block row at a time. Writing
    ``d_k = chol(S_k) \\ (W - sum_{l<k} d_l^T d_l)``, block ``(i, k)`` of the
    factor equals ``d_k^T`` for every ``i > k``, and the Schur complement of
    step ``i`` is ``S_i = V - sum_{l<i} d_l^T d_l``. Only the newest ``d`` and
    the running sum are kept, so the work is ``O(n J^3)`` flops plus
    ``O(n^2 J^2)`` to write the factor, against ``O(n^3 J^3)`` for a dense
    factorization.

    Jitter, when needed, is added to ``V`` (the diagonal of the full matrix).

    Parameters
    ----------
    n_blocks : int
        Number of block rows, at least 1.
    V, W : (J, J) array_like
        Symmetric diagonal and off-diagonal blocks.
    """
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    if n_blocks < 1:
        raise InvalidInput("n_blocks must be >= 1")
    if V.ndim != 2 or V.shape[0] != V.shape[1] or W.shape != V.shape:
        raise InvalidInput(f"V and W must be square and equal in shape, got {V.shape} and {W.shape}")
    J = V.shape[0]
    _check_symmetric(V, "V")
    _check_symmetric(W, "W")
    if not np.any(V) and not np.any(W):
        return CholeskyFactor(np.zeros((n_blocks * J, n_blocks * J)))
    scale = float(np.mean(np.diag(V)))
    prefix = f"{stage}, " if stage else ""
    last_error = None
    for delta in jitter_ladder:
        if delta and not scale > 0.0:
            break
        Vj = V + delta * scale * np.eye(J) if delta else V
        try:
            L = _block_cholesky_equal_once(n_blocks, Vj, W, prefix)
        except NotPositiveDefinite as exc:
            last_error = exc
            continue
        return CholeskyFactor(L, delta * scale if delta else 0.0)
    raise NotPositiveDefinite("jitter ladder exhausted", last_error.stage if last_error else stage)


def _block_cholesky_equal_once(n_blocks, V, W, prefix):
    J = V.shape[0]
    L = np.zeros((n_blocks * J, n_blocks * J))
    # running sum of d_l^T d_l over completed steps
    gram_sum = np.zeros((J, J))
    for i in range(n_blocks):
        S = V - gram_sum
        S = 0.5 * (S + S.T)
        Lii, info = lapack.dpotrf(S, lower=1, clean=1)
        if info != 0:
            raise NotPositiveDefinite("Schur complement is not positive definite", f"{prefix}block step {i + 1}")
        rows = slice(i * J, (i + 1) * J)
        L[rows, rows] = Lii
        if i == n_blocks - 1:
            break
        # d_i solves chol(S_i) d_i = W - sum_{l<i} d_l^T d_l
        d = solve_triangular(Lii, W - gram_sum, lower=True, check_finite=False)
        below = L[(i + 1) * J:, rows].reshape(n_blocks - i - 1, J, J)
        below[...] = d.T
        gram_sum += d.T @ d
    return L


def block_cholesky_extend(L_A, C, B, jitter_ladder=JITTER_LADDER, stage=None) -> CholeskyFactor:
    """Extend ``chol(A)`` to the factor of ``[[A, C^T], [C, B]]``.

    The new block row is ``[C chol(A)^{-T}, chol(S)]`` with the Schur
    complement ``S = B - C A^{-1} C^T``.
    """
    jitter_A = L_A.jitter if isinstance(L_A, CholeskyFactor) else 0.0
    LA = _as_lower(L_A)
    C = np.asarray(C, dtype=float)
    B = np.asarray(B, dtype=float)
    m = B.shape[0]
    if B.ndim != 2 or B.shape[1] != m:
        raise InvalidInput(f"B must be square, got {B.shape}")
    if C.shape != (m, LA.shape[0]):
        raise InvalidInput(f"C must have shape {(m, LA.shape[0])}, got {C.shape}")
    X = solve_lower(LA, C.T).T
    S = B - X @ X.T
    S = 0.5 * (S + S.T)
    LS = cholesky(S, jitter_ladder, stage=stage or "Schur complement", check_symmetric=False)
    k = LA.shape[0]
    L = np.zeros((k + m, k + m))
    L[:k, :k] = LA
    L[k:, :k] = X
    L[k:, k:] = LS.L
    return CholeskyFactor(L, max(jitter_A, LS.jitter))
