"""Ambient tensor accessors.

Geometry only ever needs two contractions of an ambient tensor ``A``:

* ``contract_except(Us, k)``: the matrix ``(A x_{j != k} U_j^T)_(k)``;
* ``contract_all(Ws)``: the small tensor ``A x_k W_k^T``.

:class:`DenseAmbient` wraps an ndarray.  :class:`SparseAmbient` holds a list
of entries (completion residuals) and evaluates both contractions with
row-wise Khatri-Rao features, so it is never densified.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.sparse

from . import tenalg

CHUNK = 8192


def _features(rows: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise Kronecker products, first listed factor varying fastest.

    ``rows[j]`` is ``m x c_j``; the output is ``m x prod c_j`` and column
    ``a_0 + c_0 a_1 + c_0 c_1 a_2 + ...`` holds ``prod_j rows[j][:, a_j]``,
    matching the column-major linearization used by :func:`tenalg.unfold`.
    """
    F = rows[0]
    m = F.shape[0]
    for R in rows[1:]:
        F = (R[:, :, None] * F[:, None, :]).reshape(m, -1)
    return F


def sample_factored(core: np.ndarray, factors: Sequence[np.ndarray], idx: np.ndarray) -> np.ndarray:
    """Entries ``(core x_k W_k)[i]`` for each row ``i`` of ``idx``; factors need not be orthonormal."""
    core = np.asarray(core, dtype=np.float64)
    idx = np.asarray(idx)
    m = idx.shape[0]
    g = core.ravel(order="F")
    out = np.empty(m)
    for lo in range(0, m, CHUNK):
        hi = min(m, lo + CHUNK)
        F = _features([W[idx[lo:hi, k]] for k, W in enumerate(factors)])
        out[lo:hi] = F @ g
    return out


class DenseAmbient:
    """Ambient tensor stored densely."""

    def __init__(self, A: np.ndarray):
        self.data = tenalg.as_tensor(A)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def contract_except(self, Us: Sequence[np.ndarray], k: int) -> np.ndarray:
        mats = {j: U.T for j, U in enumerate(Us) if j != k}
        return tenalg.unfold(tenalg.multi_mode_product(self.data, mats), k)

    def contract_all(self, Ws: Sequence[np.ndarray]) -> np.ndarray:
        return tenalg.multi_mode_product(self.data, list(Ws), transpose=True)

    def norm(self) -> float:
        return tenalg.fro_norm(self.data)

    def scaled(self, c: float) -> "DenseAmbient":
        return DenseAmbient(c * self.data)

    def to_dense(self) -> np.ndarray:
        return self.data.copy()


class SparseAmbient:
    """Ambient tensor with nonzeros only at ``idx`` (an ``m x d`` integer array, 0-based)."""

    def __init__(self, shape: Sequence[int], idx: np.ndarray, vals: np.ndarray):
        self._shape = tuple(int(n) for n in shape)
        self.idx = np.asarray(idx, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=np.float64)
        if self.idx.ndim != 2 or self.idx.shape[1] != len(self._shape):
            raise ValueError("idx must be an m x d integer array")
        if self.vals.shape != (self.idx.shape[0],):
            raise ValueError("vals must have one entry per index")
        self._scatter = {}

    @property
    def shape(self) -> tuple:
        return self._shape

    def _rows(self, k: int):
        # n_k x m selector with entry A(i) in row i_k, cached per mode
        if k not in self._scatter:
            m = self.idx.shape[0]
            self._scatter[k] = scipy.sparse.csr_matrix(
                (self.vals, (self.idx[:, k], np.arange(m))), shape=(self._shape[k], m))
        return self._scatter[k]

    def contract_except(self, Us: Sequence[np.ndarray], k: int) -> np.ndarray:
        d = len(self._shape)
        others = [j for j in range(d) if j != k]
        width = int(np.prod([Us[j].shape[1] for j in others], dtype=np.int64))
        S = self._rows(k)
        m = self.idx.shape[0]
        out = np.zeros((self._shape[k], width))
        for lo in range(0, m, CHUNK):
            hi = min(m, lo + CHUNK)
            F = _features([Us[j][self.idx[lo:hi, j]] for j in others]) if others else np.ones((hi - lo, 1))
            out += S[:, lo:hi] @ F
        return out

    def contract_all(self, Ws: Sequence[np.ndarray]) -> np.ndarray:
        widths = tuple(W.shape[1] for W in Ws)
        m = self.idx.shape[0]
        acc = np.zeros(int(np.prod(widths, dtype=np.int64)))
        for lo in range(0, m, CHUNK):
            hi = min(m, lo + CHUNK)
            F = _features([W[self.idx[lo:hi, j]] for j, W in enumerate(Ws)])
            acc += self.vals[lo:hi] @ F
        return acc.reshape(widths, order="F")

    def norm(self) -> float:
        return float(np.linalg.norm(self.vals))

    def scaled(self, c: float) -> "SparseAmbient":
        return SparseAmbient(self._shape, self.idx, c * self.vals)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self._shape)
        np.add.at(out, tuple(self.idx.T), self.vals)
        return out


def as_ambient(A):
    if isinstance(A, (DenseAmbient, SparseAmbient)):
        return A
    return DenseAmbient(A)
