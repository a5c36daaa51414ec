"""Dense matrix factorizations and projections for matrix varieties."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

RANK_TOL = 1e-12


class RankDeficientError(np.linalg.LinAlgError):
    """Raised when a matrix is numerically rank deficient where full rank is required."""

    def __init__(self, msg: str, condition: float = np.inf):
        super().__init__(msg)
        self.condition = condition


class ThinSVD(NamedTuple):
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.size

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def _svd(A: np.ndarray):
    try:
        return scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")


def thin_svd(A: np.ndarray, rank_tol: float = RANK_TOL) -> ThinSVD:
    """Thin SVD keeping singular values above ``rank_tol * sigma_1``.

    A zero matrix yields empty factors.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("thin_svd expects a matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    m, n = A.shape
    if A.size == 0 or not np.any(A):
        return ThinSVD(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))
    U, s, Vt = _svd(A)
    r = int(np.count_nonzero(s > rank_tol * s[0])) if s[0] > 0 else 0
    return ThinSVD(U[:, :r], s[:r], Vt[:r].T)


def truncate_rank(A: np.ndarray, r: int) -> np.ndarray:
    """Best rank-``r`` approximation (Eckart-Young).

    On ties ``sigma_r == sigma_{r+1}`` the first ``r`` singular triplets in
    LAPACK order are kept; the result is deterministic for a fixed input.
    """
    A = np.asarray(A, dtype=np.float64)
    if r < 0:
        raise ValueError("rank must be nonnegative")
    if r >= min(A.shape):
        return A.copy()
    if r == 0:
        return np.zeros_like(A)
    U, s, Vt = _svd(A)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def orthonormalize(B: np.ndarray, rank_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of span(B) by thin QR, with a nonnegative R diagonal."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[1] == 0:
        return np.zeros((B.shape[0], 0))
    if B.shape[1] > B.shape[0]:
        raise RankDeficientError("more columns than rows; cannot have full column rank")
    Q, R = np.linalg.qr(B)
    d = np.abs(np.diag(R))
    scale = max(np.linalg.norm(B, 2), np.finfo(float).tiny)
    if d.min() <= rank_tol * scale:
        raise RankDeficientError("matrix is numerically rank deficient",
                                 condition=scale / max(d.min(), np.finfo(float).tiny))
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs


def complement_basis(U: np.ndarray, m: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``m`` orthonormal columns spanning a subspace of span(U)^perp.

    Without ``rng`` the basis is taken from the coordinate directions that
    are least represented in span(U) (deterministic); with ``rng`` it is a
    random Gaussian draw projected away from U.
    """
    U = np.asarray(U, dtype=np.float64)
    n, r = U.shape
    if m < 0 or m > n - r:
        raise ValueError(f"cannot take {m} complement directions of a rank-{r} basis in R^{n}")
    if m == 0:
        return np.zeros((n, 0))
    if rng is None:
        leverage = np.sum(U * U, axis=1)
        order = np.argsort(leverage, kind="stable")
        B = np.eye(n)[:, order[: min(n, m + r)]]
    else:
        B = rng.standard_normal((n, m + r))
    # two rounds of projection keep U^T W at machine precision
    for _ in range(2):
        B = B - U @ (U.T @ B)
    Q, _, _ = scipy.linalg.qr(B, mode="economic", pivoting=True)
    W = Q[:, :m]
    W = W - U @ (U.T @ W)
    return orthonormalize(W)


def pinv_unfolding(G: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose inverse ``G^T (G G^T)^{-1}`` of a full-row-rank matrix, via SVD."""
    G = np.asarray(G, dtype=np.float64)
    r = G.shape[0]
    U, s, Vt = _svd(G)
    if s.size < r or s[0] == 0 or s[-1] <= rank_tol * s[0]:
        cond = np.inf if s.size < r or s[-1] == 0 else s[0] / s[-1]
        raise RankDeficientError(f"matrix is not of full row rank (condition {cond:.3e})", cond)
    return (Vt.T / s) @ U.T


def proj_matrix_tangent_space(U: np.ndarray, V: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Projection onto the tangent space of fixed-rank matrices at ``U S V^T``."""
    AV = A @ V
    UtA = U.T @ A
    return AV @ V.T + U @ UtA - U @ (UtA @ V) @ V.T


def proj_matrix_tangent_cone(X: np.ndarray, A: np.ndarray, r: int,
                             rank_tol: float = RANK_TOL) -> np.ndarray:
    """Metric projection of ``A`` onto the tangent cone of rank-<=r matrices at ``X``."""
    X = np.asarray(X, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    svd = thin_svd(X, rank_tol)
    if r < svd.rank:
        raise ValueError(f"rank bound {r} is below rank(X) = {svd.rank}")
    U, V = svd.U, svd.V
    tangent = proj_matrix_tangent_space(U, V, A)
    normal = A - U @ (U.T @ A)
    normal = normal - (normal @ V) @ V.T
    return tangent + truncate_rank(normal, r - svd.rank)
