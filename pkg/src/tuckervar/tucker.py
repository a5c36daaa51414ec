"""Tucker tensors, HOSVD projection/retraction and core-based rank diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tenalg
from .matkernels import RANK_TOL, _svd

ORTHO_TOL = 1e-10

# number of lossy HOSVD truncations performed so far (audited by the solvers)
HOSVD_CALLS = [0]


@dataclass(frozen=True)
class TuckerTensor:
    """``core x_1 U_1 ... x_d U_d`` with orthonormal factor columns.

    The stored rank is ``core.shape``; the exact Tucker rank may be lower
    (see :func:`core_singular_values`).  Every mode has at least one column.
    """

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = np.asarray(self.core, dtype=np.float64)
        factors = tuple(np.asarray(U, dtype=np.float64) for U in self.factors)
        if core.ndim != len(factors):
            raise ValueError(f"core of order {core.ndim} needs {core.ndim} factors, got {len(factors)}")
        for k, U in enumerate(factors):
            if U.ndim != 2 or U.shape[1] != core.shape[k]:
                raise ValueError(f"factor {k} has shape {U.shape}, core needs {core.shape[k]} columns")
            if U.shape[1] == 0:
                raise ValueError("rank-0 modes are not allowed; use a zero core of rank 1")
            if U.shape[1] > U.shape[0]:
                raise ValueError(f"factor {k} has more columns than rows")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def ndim(self) -> int:
        return self.core.ndim

    @property
    def shape(self) -> tuple:
        return tuple(U.shape[0] for U in self.factors)

    @property
    def rank(self) -> tuple:
        return self.core.shape

    def to_dense(self) -> np.ndarray:
        return to_dense(self)

    def norm(self) -> float:
        return tenalg.fro_norm(self.core)

    def orthonormality_error(self) -> float:
        return max(np.abs(U.T @ U - np.eye(U.shape[1])).max() for U in self.factors)

    def scaled(self, c: float) -> "TuckerTensor":
        return TuckerTensor(c * self.core, self.factors)

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "TuckerTensor":
        factors = tuple(tenalg.unit(n, 0)[:, None] for n in shape)
        return cls(np.zeros((1,) * len(shape)), factors)


def to_dense(X: TuckerTensor) -> np.ndarray:
    return tenalg.multi_mode_product(X.core, list(X.factors))


def tucker_inner(X: TuckerTensor, Y: TuckerTensor) -> float:
    """Frobenius inner product of two Tucker tensors without densifying."""
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    grams = [U.T @ W for U, W in zip(X.factors, Y.factors)]
    return tenalg.inner(X.core, tenalg.multi_mode_product(Y.core, grams))


def _check_rank(shape, r) -> tuple:
    r = tuple(int(x) for x in r)
    if len(r) != len(shape):
        raise ValueError(f"rank {r} does not match order {len(shape)}")
    if any(x < 1 for x in r):
        raise ValueError(f"Tucker rank entries must be >= 1, got {r}")
    if any(x > n for x, n in zip(r, shape)):
        raise ValueError(f"rank {r} exceeds shape {shape}")
    return r


def _sequential_truncation(T: np.ndarray, r, rank_tol: float):
    """Mode-by-mode truncation of a small dense tensor in ascending mode order.

    Returns the compressed core and the orthonormal per-mode bases.  Each
    mode keeps ``min(r_k, numerical rank)`` columns (at least one); on ties
    the first singular vectors in LAPACK order are kept.
    """
    core = T
    bases = []
    for k in range(T.ndim):
        M = tenalg.unfold(core, k)
        U, s, _ = _svd(M)
        keep = r[k]
        if s.size and s[0] > 0:
            keep = min(keep, max(1, int(np.count_nonzero(s > rank_tol * s[0]))))
        else:
            keep = 1
        keep = min(keep, U.shape[1])
        Uk = U[:, :keep]
        bases.append(Uk)
        core = tenalg.mode_product(core, k, Uk.T)
    return _drop_null_directions(core, bases, rank_tol)


def _drop_null_directions(core: np.ndarray, bases: list, rank_tol: float):
    """Remove numerically null directions of every core unfolding (lossless up to rank_tol).

    Truncating later modes can make an earlier core unfolding rank deficient;
    this pass restores full row rank of every ``G_(k)``.
    """
    changed = True
    while changed:
        changed = False
        for k in range(core.ndim):
            M = tenalg.unfold(core, k)
            if M.shape[0] == 1:
                continue
            W, s, _ = _svd(M)
            q = max(1, int(np.count_nonzero(s > rank_tol * s[0]))) if s.size and s[0] > 0 else 1
            if q < M.shape[0]:
                W = W[:, :q]
                core = tenalg.mode_product(core, k, W.T)
                bases[k] = bases[k] @ W
                changed = True
    return core, bases


def reveal_rank(X: TuckerTensor, rank_tol: float = RANK_TOL) -> TuckerTensor:
    """Same tensor with numerically null core directions removed (no truncation of nonzero parts)."""
    core, bases = _drop_null_directions(X.core, list(X.factors), rank_tol)
    if core is X.core:
        return X
    return TuckerTensor(core, tuple(bases))


def hosvd(A, r, rank_tol: float = RANK_TOL) -> TuckerTensor:
    """HOSVD projection onto tensors of Tucker rank <= r.

    ``A`` may be a dense array or a :class:`TuckerTensor`; in the latter case
    only the core is decomposed.  Modes are truncated sequentially in
    ascending order, each by the best rank-``r_k`` approximation of the
    current mode-k unfolding.  Singular values at or below
    ``rank_tol * sigma_1`` are treated as zero, so the stored rank of the
    output equals its numerical Tucker rank (capped at ``r``).
    """
    if isinstance(A, TuckerTensor):
        return hosvd_structured(A.core, A.factors, r, rank_tol)
    A = tenalg.as_tensor(A)
    r = _check_rank(A.shape, r)
    HOSVD_CALLS[0] += 1
    core, bases = _sequential_truncation(A, r, rank_tol)
    return TuckerTensor(core, tuple(bases))


def hosvd_structured(core: np.ndarray, factors: Sequence[np.ndarray], r,
                     rank_tol: float = RANK_TOL) -> TuckerTensor:
    """HOSVD of ``core x_k W_k`` for arbitrary (not necessarily orthonormal) ``W_k``.

    Each ``W_k`` is reduced by a thin QR and the decomposition is carried
    out on the small core, so the dense tensor is never formed.
    """
    shape = tuple(W.shape[0] for W in factors)
    r = _check_rank(shape, r)
    HOSVD_CALLS[0] += 1
    core = np.asarray(core, dtype=np.float64)
    qs = []
    for k, W in enumerate(factors):
        Q, R = np.linalg.qr(np.asarray(W, dtype=np.float64))
        qs.append(Q)
        core = tenalg.mode_product(core, k, R)
    small, bases = _sequential_truncation(core, r, rank_tol)
    return TuckerTensor(small, tuple(Q @ B for Q, B in zip(qs, bases)))


def from_dense(A: np.ndarray, r, rank_tol: float = RANK_TOL) -> TuckerTensor:
    return hosvd(A, r, rank_tol)


def retract_hosvd(X: TuckerTensor, V, s: float, r, rank_tol: float = RANK_TOL) -> TuckerTensor:
    """HOSVD retraction ``P^HO_{<=r}(X + s V)`` for a tangent direction ``V`` at ``X``.

    ``V`` must provide ``structured_step(s)`` returning a (core, factors)
    pair representing ``X + s V``; the structured core is truncated.
    """
    if V.base is not X and not _same_base(V.base, X):
        raise ValueError("direction is not expressed at this base point")
    core, factors = V.structured_step(s)
    return hosvd_structured(core, factors, r, rank_tol)


def _same_base(A: TuckerTensor, B: TuckerTensor) -> bool:
    return (A.rank == B.rank and A.shape == B.shape and np.array_equal(A.core, B.core)
            and all(np.array_equal(U, W) for U, W in zip(A.factors, B.factors)))


def core_singular_values(X: TuckerTensor, k: int) -> np.ndarray:
    """Singular values of the mode-k unfolding of ``X``, computed from the core."""
    return np.linalg.svd(tenalg.unfold(X.core, k), compute_uv=False)


def sigma_ratios(X: TuckerTensor) -> np.ndarray:
    """Per mode ``sigma_min / sigma_max`` of the core unfoldings (0 for a zero tensor)."""
    out = []
    for k in range(X.ndim):
        s = core_singular_values(X, k)[: X.rank[k]]
        out.append(s[-1] / s[0] if s[0] > 0 else 0.0)
    return np.array(out)


def exact_tucker_rank(A, tol: float = 1e-10) -> tuple:
    """Numerical rank of each unfolding (``sigma_i > tol * sigma_1``)."""
    if isinstance(A, TuckerTensor):
        svals = [core_singular_values(A, k) for k in range(A.ndim)]
    else:
        A = np.asarray(A, dtype=np.float64)
        svals = [np.linalg.svd(tenalg.unfold(A, k), compute_uv=False) for k in range(A.ndim)]
    ranks = []
    for s in svals:
        if s.size == 0 or s[0] == 0:
            ranks.append(0)
        else:
            ranks.append(int(np.count_nonzero(s > tol * s[0])))
    return tuple(ranks)


def random_tucker(shape: Sequence[int], r, rng: np.random.Generator) -> TuckerTensor:
    """Gaussian core and QR-orthonormalized Gaussian factors."""
    r = _check_rank(tuple(shape), r)
    core = rng.standard_normal(r)
    factors = []
    for n, rk in zip(shape, r):
        Q, R = np.linalg.qr(rng.standard_normal((n, rk)))
        factors.append(Q * np.where(np.diag(R) < 0, -1.0, 1.0))
    return TuckerTensor(core, tuple(factors))
