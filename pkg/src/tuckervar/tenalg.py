"""Dense multilinear algebra kernels.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  The
linearization used by :func:`unfold` is column-major over modes: in the
mode-k unfolding the remaining indices are ordered with the lowest mode
varying fastest, so that column ``j = sum_{l != k} i_l * J_l`` with
``J_l = prod_{m < l, m != k} n_m`` (0-based indices).

Mode indices are 0-based throughout the Python API.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

MAX_ORDER = 8


def _check_mode(ndim: int, k: int) -> None:
    if not 0 <= k < ndim:
        raise ValueError(f"mode index {k} out of range for an order-{ndim} tensor")


def as_tensor(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 1 or X.ndim > MAX_ORDER:
        raise ValueError(f"tensor order must be in 1..{MAX_ORDER}, got {X.ndim}")
    return X


def unfold(X: np.ndarray, k: int) -> np.ndarray:
    """Mode-k unfolding, an ``n_k x prod_{j != k} n_j`` matrix."""
    X = np.asarray(X)
    _check_mode(X.ndim, k)
    return np.reshape(np.moveaxis(X, k, 0), (X.shape[k], -1), order="F")


def fold(M: np.ndarray, k: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given shape."""
    shape = tuple(int(n) for n in shape)
    _check_mode(len(shape), k)
    M = np.asarray(M)
    rest = shape[:k] + shape[k + 1:]
    expected = (shape[k], int(np.prod(rest, dtype=np.int64)))
    if M.ndim != 2 or M.shape != expected:
        raise ValueError(f"matrix of shape {M.shape} cannot be folded along mode {k} "
                         f"into {shape}; expected {expected}")
    return np.moveaxis(np.reshape(M, (shape[k],) + rest, order="F"), 0, k)


def mode_product(X: np.ndarray, k: int, A: np.ndarray) -> np.ndarray:
    """k-mode product ``X x_k A`` with ``A`` of shape ``(M, n_k)``."""
    X = np.asarray(X)
    A = np.asarray(A)
    _check_mode(X.ndim, k)
    if A.ndim != 2 or A.shape[1] != X.shape[k]:
        raise ValueError(f"mode-{k} product needs a matrix with {X.shape[k]} columns, "
                         f"got shape {A.shape}")
    out = np.tensordot(A, X, axes=(1, k))
    return np.moveaxis(out, 0, k)


def multi_mode_product(X: np.ndarray, matrices: Mapping[int, np.ndarray] | Sequence,
                       transpose: bool = False) -> np.ndarray:
    """Apply ``x_k A_k`` for every given mode, in ascending mode order.

    ``matrices`` is either a mapping mode -> matrix or a sequence of length
    ``X.ndim`` whose ``None`` entries are skipped.  With ``transpose=True``
    the transposes ``A_k^T`` are applied instead.
    """
    if isinstance(matrices, Mapping):
        items = list(matrices.items())
    else:
        if len(matrices) != np.ndim(X):
            raise ValueError("need one matrix (or None) per mode")
        items = [(k, A) for k, A in enumerate(matrices) if A is not None]
    modes = [k for k, _ in items]
    if len(set(modes)) != len(modes):
        raise ValueError(f"repeated mode in {modes}")
    out = np.asarray(X)
    for k, A in sorted(items, key=lambda kv: kv[0]):
        A = np.asarray(A)
        out = mode_product(out, k, A.T if transpose else A)
    return out


def inner(X: np.ndarray, Y: np.ndarray) -> float:
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    return float(np.dot(X.ravel(order="F"), Y.ravel(order="F")))


def fro_norm(X: np.ndarray) -> float:
    return float(np.linalg.norm(np.ravel(X)))


def outer_rank1(*vectors) -> np.ndarray:
    """Outer product ``u_1 o u_2 o ... o u_d``."""
    if not vectors:
        raise ValueError("need at least one vector")
    vecs = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
    if any(v.size == 0 for v in vecs):
        raise ValueError("factor vectors must be nonempty")
    out = vecs[0]
    for v in vecs[1:]:
        out = np.multiply.outer(out, v)
    return out


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def unit(n: int, i: int) -> np.ndarray:
    """Standard basis vector ``e_i`` of length ``n`` (0-based ``i``)."""
    e = np.zeros(n)
    e[i] = 1.0
    return e
