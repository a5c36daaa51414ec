"""Dense oracles shared by the test modules."""

import numpy as np

from tuckervar import tenalg
from tuckervar.tucker import random_tucker


def feasible_rank(rng, lo, hi, d=3):
    # a Tucker rank needs r_k <= prod_{j != k} r_j
    while True:
        rr = tuple(int(x) for x in rng.integers(lo, hi + 1, d))
        if all(q * q <= np.prod(rr) for q in rr):
            return rr


def dense_rank(A, tol=1e-8):
    out = []
    for k in range(A.ndim):
        s = np.linalg.svd(tenalg.unfold(A, k), compute_uv=False)
        out.append(int(np.count_nonzero(s > tol * s[0])) if s[0] > 0 else 0)
    return tuple(out)


def in_matrix_cone(X, V, r, tol=1e-8):
    """``V`` in the tangent cone of rank-<=r matrices at ``X``: the doubly normal part has rank <= r - rank(X)."""
    U, s, Wt = np.linalg.svd(X, full_matrices=False)
    q = int(np.count_nonzero(s > 1e-10 * s[0])) if s[0] > 0 else 0
    U, W = U[:, :q], Wt[:q].T
    N = V - U @ (U.T @ V)
    N = N - (N @ W) @ W.T
    sn = np.linalg.svd(N, compute_uv=False)
    scale = max(np.linalg.norm(V), 1.0)
    return int(np.count_nonzero(sn > tol * scale)) <= r - q


def in_tucker_cone(X, V, r, tol=1e-8):
    return all(in_matrix_cone(tenalg.unfold(X, k), tenalg.unfold(V, k), r[k], tol) for k in range(X.ndim))


def random_point(rng, shape, rr):
    return random_tucker(shape, rr, rng)


def completion_problem(seed, shape=(15, 15, 15), true_rank=(2, 2, 2), p=0.3):
    """Random low-rank tensor, disjoint train/test samples and a completion objective."""
    from tuckervar.objectives import SampleSet, completion_objective
    from tuckervar.solvers import Monitor

    rng = np.random.default_rng(seed)
    A = random_tucker(shape, true_rank, rng).to_dense()
    m = round(p * A.size)
    lin = rng.choice(A.size, 2 * m, replace=False)
    tr = np.stack(np.unravel_index(lin[:m], shape), 1)
    te = np.stack(np.unravel_index(lin[m:], shape), 1)
    train, test = SampleSet.from_dense(A, tr), SampleSet.from_dense(A, te)
    return rng, A, completion_objective(train), Monitor(train, test)


def audit_trace(trace, r):
    """Exact monotonicity of f and Tucker rank <= r on every record."""
    f = trace.f_values()
    assert np.all(np.diff(f) <= 0), "objective increased"
    for rank in trace.ranks():
        assert all(1 <= q <= b for q, b in zip(rank, r)), f"rank {rank} outside 1..{r}"
