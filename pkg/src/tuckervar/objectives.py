"""Objectives with structured gradients, sample sets and error metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tenalg
from .ambient import DenseAmbient, SparseAmbient, sample_factored
from .tucker import TuckerTensor


@dataclass(frozen=True)
class SampleSet:
    """Observed entries; ``indices`` is ``m x d`` (0-based), sorted lexicographically, no duplicates."""

    shape: tuple
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, len(shape))
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        if vals.shape[0] != idx.shape[0]:
            raise ValueError(f"{idx.shape[0]} indices but {vals.shape[0]} values")
        if idx.size and (idx.min() < 0 or np.any(idx.max(axis=0) >= np.array(shape))):
            bad = int(np.flatnonzero(np.any((idx < 0) | (idx >= np.array(shape)), axis=1))[0])
            raise ValueError(f"index {tuple(idx[bad])} out of range for shape {shape}")
        order = np.lexsort(idx.T[::-1]) if idx.shape[0] else np.arange(0)
        idx, vals = idx[order], vals[order]
        if idx.shape[0] > 1:
            dup = np.all(idx[1:] == idx[:-1], axis=1)
            if np.any(dup):
                j = int(np.flatnonzero(dup)[0])
                if np.any(vals[1:][dup] != vals[:-1][dup]):
                    raise ValueError(f"conflicting values for repeated index {tuple(idx[j])}")
                keep = np.concatenate([[True], ~dup])
                idx, vals = idx[keep], vals[keep]
        idx.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def rate(self) -> float:
        return len(self) / float(np.prod(self.shape))

    @classmethod
    def from_dense(cls, A: np.ndarray, indices: np.ndarray) -> "SampleSet":
        indices = np.asarray(indices, dtype=np.int64)
        return cls(A.shape, indices, A[tuple(indices.T)])

    @classmethod
    def full(cls, A: np.ndarray) -> "SampleSet":
        idx = np.array(list(np.ndindex(*A.shape)), dtype=np.int64).reshape(-1, A.ndim)
        return cls.from_dense(A, idx)

    def with_values(self, values) -> "SampleSet":
        return SampleSet(self.shape, self.indices, values)


def sample_tucker(X: TuckerTensor, omega: SampleSet | np.ndarray) -> np.ndarray:
    """Entries of ``X`` at the sampled multi-indices, without densifying."""
    if isinstance(omega, SampleSet):
        if omega.shape != X.shape:
            raise ValueError(f"sample shape {omega.shape} does not match tensor shape {X.shape}")
        idx = omega.indices
    else:
        idx = np.asarray(omega, dtype=np.int64)
        if idx.size and (idx.min() < 0 or np.any(idx.max(axis=0) >= np.array(X.shape))):
            raise ValueError(f"index out of range for shape {X.shape}")
    return sample_factored(X.core, X.factors, idx)


def _sample_direction(V, idx: np.ndarray) -> np.ndarray:
    if isinstance(V, TuckerTensor):
        return sample_factored(V.core, V.factors, idx)
    if isinstance(V, SparseAmbient):
        # sparse directions here always share the training index set
        return V.vals
    if isinstance(V, DenseAmbient):
        return V.data[tuple(idx.T)]
    if isinstance(V, np.ndarray):
        return V[tuple(idx.T)]
    if hasattr(V, "as_cone_element"):
        V = V.as_cone_element()
    return V.sample(idx)


def exact_initial_stepsize(X: TuckerTensor, V, omega: SampleSet) -> float:
    """Minimizer of ``s -> ||P(X + s V) - P(A)||^2`` over s, clamped at 0.

    ``omega`` carries the observed values of ``A``.  Raises ValueError when
    ``P V`` vanishes.
    """
    pv = _sample_direction(V, omega.indices)
    den = float(pv @ pv)
    if den == 0.0:
        raise ValueError("direction vanishes on the sample set")
    num = float(pv @ (omega.values - sample_tucker(X, omega)))
    return max(num / den, 0.0)


class CompletionObjective:
    """``f(X) = 1/2 ||P(X) - P(A)||^2`` over a training sample set."""

    def __init__(self, train: SampleSet):
        self.train = train
        self.shape = train.shape
        self._last = (None, None)

    def residual(self, X: TuckerTensor) -> np.ndarray:
        if self._last[0] is not X:
            self._last = (X, sample_tucker(X, self.train) - self.train.values)
        return self._last[1]

    def __call__(self, X: TuckerTensor) -> float:
        res = self.residual(X)
        return 0.5 * float(res @ res)

    eval = __call__

    def euclid_grad(self, X: TuckerTensor) -> SparseAmbient:
        return SparseAmbient(self.shape, self.train.indices, self.residual(X))

    def initial_stepsize(self, X: TuckerTensor, V) -> float:
        return exact_initial_stepsize(X, V, self.train)

    def value_dense(self, Z: np.ndarray) -> float:
        res = Z[tuple(self.train.indices.T)] - self.train.values
        return 0.5 * float(res @ res)


class DenseLsqObjective:
    """``f(X) = scale * ||X - A||^2`` with gradient ``2 scale (X - A)``."""

    def __init__(self, A: np.ndarray, scale: float = 1.0):
        self.A = tenalg.as_tensor(A)
        self.shape = self.A.shape
        self.scale = float(scale)
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def __call__(self, X) -> float:
        D = (X.to_dense() if isinstance(X, TuckerTensor) else np.asarray(X)) - self.A
        return self.scale * float(np.sum(D * D))

    eval = __call__
    value_dense = __call__

    def euclid_grad(self, X: TuckerTensor) -> DenseAmbient:
        return DenseAmbient(2.0 * self.scale * (X.to_dense() - self.A))

    def initial_stepsize(self, X: TuckerTensor, V) -> float:
        Vd = _dense_direction(V)
        den = float(np.sum(Vd * Vd))
        if den == 0.0:
            raise ValueError("direction is zero")
        return max(float(np.sum(Vd * (self.A - X.to_dense()))) / den, 0.0)


def _dense_direction(V) -> np.ndarray:
    if isinstance(V, (DenseAmbient, SparseAmbient)):
        return V.to_dense()
    if isinstance(V, np.ndarray):
        return V
    return V.to_dense()


def completion_objective(train: SampleSet) -> CompletionObjective:
    return CompletionObjective(train)


def dense_lsq_objective(A: np.ndarray, scale: float = 1.0) -> DenseLsqObjective:
    return DenseLsqObjective(A, scale)


def rel_sample_error(X: TuckerTensor, omega: SampleSet) -> float:
    den = float(np.linalg.norm(omega.values))
    if den == 0.0:
        raise ValueError("reference vanishes on the sample set")
    return float(np.linalg.norm(sample_tucker(X, omega) - omega.values)) / den


def metrics(X: TuckerTensor, omega: SampleSet, gamma: SampleSet | None = None,
            A: np.ndarray | None = None) -> dict:
    """Training/test errors and, given the dense reference, relerr and PSNR (``inf`` at zero error)."""
    out = {"train_error": rel_sample_error(X, omega)}
    if gamma is not None and len(gamma):
        out["test_error"] = rel_sample_error(X, gamma)
    if A is not None:
        A = np.asarray(A, dtype=np.float64)
        err2 = float(np.sum((X.to_dense() - A) ** 2))
        nA = tenalg.fro_norm(A)
        if nA == 0.0:
            raise ValueError("reference tensor is zero")
        out["relerr"] = np.sqrt(err2) / nA
        out["psnr"] = np.inf if err2 == 0.0 else 10.0 * np.log10(A.size * A.max() / err2)
    return out
