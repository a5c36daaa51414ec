"""Tangent spaces and tangent cones of Tucker varieties.

A point ``X = G x_k U_k`` of exact rank ``rr`` (the stored rank) and a rank
bound ``r >= rr`` are given.  Tangent-cone elements are kept in the
parametrization

    V = C x_k [U_k U1_k] + sum_k G x_k Y_k x_{j != k} U_j,

with ``U1_k`` orthonormal and orthogonal to ``U_k`` and ``Y_k`` orthogonal to
``[U_k U1_k]``.  The d+1 summands are mutually orthogonal.  Summand 0 is the
core block; summand ``j >= 1`` is the factor block of mode ``j - 1``
(modes are 0-based).

Ambient tensors are passed as accessors (see :mod:`tuckervar.ambient`) or as
plain ndarrays, which are wrapped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tenalg
from .ambient import as_ambient, sample_factored
from .matkernels import RANK_TOL, complement_basis, orthonormalize, pinv_unfolding, thin_svd
from .tucker import TuckerTensor

LEADING_SINGULAR = "leading_singular"
RANDOM_COMPLEMENT = "random_complement"


@dataclass(frozen=True)
class ConeBasisChoice:
    """How the extra directions ``U1_k`` are picked: leading singular vectors or a seeded random draw."""

    strategy: str = LEADING_SINGULAR
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in (LEADING_SINGULAR, RANDOM_COMPLEMENT):
            raise ValueError(f"unknown cone basis strategy {self.strategy!r}")


DEFAULT_CHOICE = ConeBasisChoice()


def _core_unfoldings(X: TuckerTensor):
    return [tenalg.unfold(X.core, k) for k in range(X.ndim)]


@dataclass(frozen=True)
class TangentConeElement:
    """Element of the tangent cone at ``base`` for rank bound ``bound``."""

    base: TuckerTensor
    bound: tuple
    C: np.ndarray
    U1: tuple
    Y: tuple
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        d = self.base.ndim
        if len(self.U1) != d or len(self.Y) != d:
            raise ValueError("need one U1 and one Y per mode")
        widths = tuple(rk + U1.shape[1] for rk, U1 in zip(self.base.rank, self.U1))
        if self.C.shape != widths:
            raise ValueError(f"C has shape {self.C.shape}, expected {widths}")
        if any(w > b for w, b in zip(widths, self.bound)):
            raise ValueError(f"cone basis widths {widths} exceed the rank bound {self.bound}")

    @property
    def ndim(self) -> int:
        return self.base.ndim

    def S(self, k: int) -> np.ndarray:
        return np.hstack([self.base.factors[k], self.U1[k]])

    def Ss(self) -> list:
        return [self.S(k) for k in range(self.ndim)]

    def block_norms(self) -> np.ndarray:
        """Frobenius norms of the d+1 orthogonal summands."""
        if "bn" not in self._cache:
            Gk = _core_unfoldings(self.base)
            norms = [tenalg.fro_norm(self.C)]
            norms += [float(np.linalg.norm(Y @ G)) for Y, G in zip(self.Y, Gk)]
            self._cache["bn"] = np.array(norms)
        return self._cache["bn"]

    def norm(self) -> float:
        return float(np.linalg.norm(self.block_norms()))

    def scaled(self, c: float) -> "TangentConeElement":
        return TangentConeElement(self.base, self.bound, c * self.C, self.U1,
                                  tuple(c * Y for Y in self.Y))

    def tucker_terms(self):
        """The summands as (core, factors) pairs; zero factor blocks are skipped."""
        U = self.base.factors
        terms = [(self.C, self.Ss())] if np.any(self.C) else []
        for k, Y in enumerate(self.Y):
            if np.any(Y):
                terms.append((self.base.core, [Y if j == k else U[j] for j in range(self.ndim)]))
        return terms

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.base.shape)
        for c, f in self.tucker_terms():
            out += tenalg.multi_mode_product(c, list(f))
        return out

    def sample(self, idx: np.ndarray) -> np.ndarray:
        out = np.zeros(np.asarray(idx).shape[0])
        for c, f in self.tucker_terms():
            out += sample_factored(c, f, idx)
        return out

    def inner_ambient(self, A) -> float:
        """``<A, V>`` using only the two accessor contractions."""
        A = as_ambient(A)
        U = self.base.factors
        val = tenalg.inner(A.contract_all(self.Ss()), self.C)
        for k, (Y, G) in enumerate(zip(self.Y, _core_unfoldings(self.base))):
            if np.any(Y):
                val += float(np.sum(A.contract_except(U, k) * (Y @ G)))
        return val

    def structured_step(self, s: float):
        """(core, factors) representing ``base + s V``, of multilinear rank <= widths + rr."""
        X = self.base
        d = X.ndim
        rr = X.rank
        widths = self.C.shape
        active = [k for k in range(d) if np.any(self.Y[k])]
        dims = tuple(widths[k] + (rr[k] if k in active else 0) for k in range(d))
        core = np.zeros(dims)
        core[tuple(slice(0, w) for w in widths)] = s * self.C
        core[tuple(slice(0, q) for q in rr)] += X.core
        for k in active:
            sl = tuple(slice(widths[j], widths[j] + rr[j]) if j == k else slice(0, rr[j])
                       for j in range(d))
            core[sl] = s * X.core
        factors = [np.hstack([self.S(k), self.Y[k]]) if k in active else self.S(k)
                   for k in range(d)]
        return core, factors

    def step_dense(self, s: float) -> np.ndarray:
        core, factors = self.structured_step(s)
        return tenalg.multi_mode_product(core, factors)


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector ``Gdot x_k U_k + sum_k G x_k Vdot_k x_{j != k} U_j`` with ``U_k^T Vdot_k = 0``."""

    base: TuckerTensor
    Gdot: np.ndarray
    Vdot: tuple

    def as_cone_element(self, bound=None) -> TangentConeElement:
        bound = tuple(self.base.rank if bound is None else bound)
        empty = tuple(np.zeros((n, 0)) for n in self.base.shape)
        return TangentConeElement(self.base, bound, self.Gdot, empty, tuple(self.Vdot))

    def norm(self) -> float:
        return self.as_cone_element().norm()

    def to_dense(self) -> np.ndarray:
        return self.as_cone_element().to_dense()


def _contractions(X: TuckerTensor, A):
    return [A.contract_except(X.factors, k) for k in range(X.ndim)]


def _pinvs(X: TuckerTensor, rank_tol: float = RANK_TOL):
    return [pinv_unfolding(G, rank_tol) for G in _core_unfoldings(X)]


def _perp(U: np.ndarray, M: np.ndarray) -> np.ndarray:
    return M - U @ (U.T @ M)


def _check_bound(X: TuckerTensor, r) -> tuple:
    r = tuple(int(x) for x in r)
    if len(r) != X.ndim:
        raise ValueError(f"rank bound {r} does not match order {X.ndim}")
    if any(q > b for q, b in zip(X.rank, r)):
        raise ValueError(f"rank bound {r} is below the stored rank {X.rank}")
    if any(b > n for b, n in zip(r, X.shape)):
        raise ValueError(f"rank bound {r} exceeds shape {X.shape}")
    return r


def proj_tangent_space(X: TuckerTensor, A, rank_tol: float = RANK_TOL) -> TangentVector:
    """Orthogonal projection of ``A`` onto the tangent space of the fixed-rank manifold at ``X``."""
    A = as_ambient(A)
    pinvs = _pinvs(X, rank_tol)
    Aneq = _contractions(X, A)
    Gdot = A.contract_all(X.factors)
    Vdot = tuple(_perp(U, M) @ P for U, M, P in zip(X.factors, Aneq, pinvs))
    return TangentVector(X, Gdot, Vdot)


def _leading_complement(U: np.ndarray, B: np.ndarray, m: int) -> np.ndarray:
    """``m`` leading left singular vectors of ``B`` (already orthogonal to U), padded if B is rank deficient."""
    n = U.shape[0]
    if m == 0:
        return np.zeros((n, 0))
    svd = thin_svd(B)
    W = svd.U[:, :m]
    W = _perp(U, W)
    if W.shape[1]:
        W = orthonormalize(W)
    if W.shape[1] < m:
        W = np.hstack([W, complement_basis(np.hstack([U, W]), m - W.shape[1])])
    return W


def select_cone_basis(X: TuckerTensor, A, r, choice: ConeBasisChoice = DEFAULT_CHOICE,
                      _Aneq=None) -> tuple:
    """Per mode ``r_k - rr_k`` orthonormal directions orthogonal to ``U_k``.

    Leading-singular choice: for d >= 3 the leading left singular vectors of
    ``P_{U_k}^perp A_{!=k}`` with ``A_{!=k} = (A x_{j != k} U_j^T)_(k)``; for
    matrices the leading singular pairs of ``P_U^perp A P_V^perp``, which make
    :func:`approx_proj_cone` the exact tangent-cone projection.
    """
    r = _check_bound(X, r)
    m = [b - q for b, q in zip(r, X.rank)]
    if choice.strategy == RANDOM_COMPLEMENT:
        rng = np.random.default_rng(choice.seed)
        return tuple(complement_basis(U, mk, rng) for U, mk in zip(X.factors, m))
    if not any(m):
        return tuple(np.zeros((n, 0)) for n in X.shape)
    A = as_ambient(A)
    if X.ndim == 2:
        # matrix case: leading singular pairs of P_U^perp A P_V^perp solve the cone projection exactly
        U, V = X.factors
        B = _perp(U, A.to_dense())
        B = _perp(V, B.T).T
        return _leading_complement(U, B, m[0]), _leading_complement(V, B.T, m[1])
    Aneq = _Aneq if _Aneq is not None else _contractions(X, A)
    return tuple(_leading_complement(U, _perp(U, M), mk)
                 for U, M, mk in zip(X.factors, Aneq, m))


def approx_proj_cone(X: TuckerTensor, A, r, choice: ConeBasisChoice = DEFAULT_CHOICE,
                     rank_tol: float = RANK_TOL) -> TangentConeElement:
    """Approximate projection onto the tangent cone.

    With ``S_k = [U_k U1_k]`` it returns
    ``A x_k P_{S_k} + sum_k G x_k (P_{S_k}^perp A_{!=k} G_(k)^+) x_{j != k} U_j``,
    which satisfies ``<A, P A> = ||P A||^2``.  For ``r`` equal to the stored
    rank it is the tangent-space projection.
    """
    A = as_ambient(A)
    r = _check_bound(X, r)
    pinvs = _pinvs(X, rank_tol)
    Aneq = _contractions(X, A)
    U1 = select_cone_basis(X, A, r, choice, _Aneq=Aneq)
    S = [np.hstack([U, W]) for U, W in zip(X.factors, U1)]
    C = A.contract_all(S)
    Y = tuple(_perp(Sk, M) @ P for Sk, M, P in zip(S, Aneq, pinvs))
    return TangentConeElement(X, r, C, U1, Y)


def partial_blocks(X: TuckerTensor, A, r, choice: ConeBasisChoice = DEFAULT_CHOICE,
                   rank_tol: float = RANK_TOL) -> list:
    """All d+1 partial projections; each keeps ``X + block`` inside the variety.

    Block 0 is ``A x_k P_{S_k}``.  Block ``k + 1`` is
    ``G x_k (P_{U_k}^perp A_{!=k} G_(k)^+) x_{j != k} U_j``.  Their sum equals
    :func:`approx_proj_cone` when ``r`` equals the stored rank; otherwise the
    factor blocks also carry the ``U1_k`` components that the approximate
    projection assigns to the core block.
    """
    A = as_ambient(A)
    r = _check_bound(X, r)
    d = X.ndim
    pinvs = _pinvs(X, rank_tol)
    Aneq = _contractions(X, A)
    U1 = select_cone_basis(X, A, r, choice, _Aneq=Aneq)
    S = [np.hstack([U, W]) for U, W in zip(X.factors, U1)]
    zeros_Y = tuple(np.zeros((n, q)) for n, q in zip(X.shape, X.rank))
    empty = tuple(np.zeros((n, 0)) for n in X.shape)
    blocks = [TangentConeElement(X, r, A.contract_all(S), U1, zeros_Y)]
    for k in range(d):
        Y = list(zeros_Y)
        Y[k] = _perp(X.factors[k], Aneq[k]) @ pinvs[k]
        blocks.append(TangentConeElement(X, r, np.zeros(X.rank), empty, tuple(Y)))
    return blocks


def partial_proj(X: TuckerTensor, A, r, block: int, choice: ConeBasisChoice = DEFAULT_CHOICE,
                 rank_tol: float = RANK_TOL) -> TangentConeElement:
    """Single partial projection; ``block`` is 0 (core) or ``k + 1`` for mode ``k``."""
    if not 0 <= block <= X.ndim:
        raise ValueError(f"block index must be in 0..{X.ndim}")
    return partial_blocks(X, A, r, choice, rank_tol)[block]


def hat_proj(X: TuckerTensor, A, r, choice: ConeBasisChoice = DEFAULT_CHOICE,
             rank_tol: float = RANK_TOL):
    """Largest-norm partial projection (ties go to the smallest block index).

    Returns ``(element, block_index)``.
    """
    blocks = partial_blocks(X, A, r, choice, rank_tol)
    norms = [b.norm() for b in blocks]
    j = int(np.argmax(norms))
    return blocks[j], j


def normal_increase_direction(X: TuckerTensor, gradE, ell, choice: ConeBasisChoice = DEFAULT_CHOICE):
    """Rank-increasing normal direction ``N = (-grad) x_k P_{U_{k,1}}``.

    Returns a :class:`TuckerTensor` ``Ghat x_k U_{k,1}`` whose factors are
    orthogonal to those of ``X``; ``<N, -grad> = ||Ghat||^2``.
    """
    ell = tuple(int(x) for x in ell)
    if len(ell) != X.ndim or any(x < 1 for x in ell):
        raise ValueError(f"rank increments must be positive per mode, got {ell}")
    if any(q + x > n for q, x, n in zip(X.rank, ell, X.shape)):
        raise ValueError(f"increments {ell} exceed the headroom of rank {X.rank} in shape {X.shape}")
    A = as_ambient(gradE).scaled(-1.0)
    target = tuple(q + x for q, x in zip(X.rank, ell))
    U1 = select_cone_basis(X, A, target, choice)
    Ghat = A.contract_all(U1)
    return TuckerTensor(Ghat, U1)


def grad_surrogate_norm(X: TuckerTensor, gradE) -> float:
    """Ambient gradient norm, an upper bound for any cone-projection norm of the antigradient."""
    return as_ambient(gradE).norm()


def riemannian_grad(X: TuckerTensor, gradE, rank_tol: float = RANK_TOL) -> TangentVector:
    return proj_tangent_space(X, as_ambient(gradE), rank_tol)
