import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tuckervar import tenalg


def _entry_oracle(X, k):
    # column index j = sum_{l != k} i_l J_l with J_l = prod_{m<l, m!=k} n_m
    n = X.shape
    cols = int(np.prod([n[l] for l in range(X.ndim) if l != k]))
    M = np.zeros((n[k], cols))
    for idx in np.ndindex(*n):
        j, J = 0, 1
        for l in range(X.ndim):
            if l == k:
                continue
            j += idx[l] * J
            J *= n[l]
        M[idx[k], j] = X[idx]
    return M


shapes = st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple)


def _rand(shape, seed):
    return np.random.default_rng(seed).uniform(-1, 1, shape)


def test_unfold_2x2x2_column_order():
    X = np.arange(1, 9, dtype=float).reshape(2, 2, 2)
    expected = np.array([[X[0, 0, 0], X[0, 1, 0], X[0, 0, 1], X[0, 1, 1]],
                         [X[1, 0, 0], X[1, 1, 0], X[1, 0, 1], X[1, 1, 1]]])
    assert np.array_equal(tenalg.unfold(X, 0), expected)
    assert np.array_equal(tenalg.fold(expected, 0, (2, 2, 2)), X)


def test_unfold_matches_index_formula(rng):
    X = rng.standard_normal((3, 4, 2, 2))
    for k in range(4):
        assert np.array_equal(tenalg.unfold(X, k), _entry_oracle(X, k))


def test_unfold_order_one():
    x = np.array([1.0, 2.0, 3.0])
    assert tenalg.unfold(x, 0).shape == (3, 1)
    assert np.array_equal(tenalg.unfold(x, 0)[:, 0], x)


def test_unfold_rank_one(rng):
    u, v, w = rng.standard_normal(3), rng.standard_normal(4), rng.standard_normal(2)
    M = tenalg.unfold(tenalg.outer_rank1(u, v, w), 1)
    s = np.linalg.svd(M, compute_uv=False)
    assert s[1] < 1e-12 * s[0]
    left = np.linalg.svd(M)[0][:, 0]
    assert abs(abs(left @ v) - np.linalg.norm(v)) < 1e-12


def test_fold_zero_and_bad_shape():
    assert not np.any(tenalg.fold(np.zeros((2, 6)), 0, (2, 3, 2)))
    with pytest.raises(ValueError):
        tenalg.fold(np.zeros((2, 5)), 0, (2, 3, 2))
    with pytest.raises(ValueError):
        tenalg.unfold(np.zeros((2, 2)), 2)


@given(shapes, st.integers(0, 2**32 - 1))
def test_fold_unfold_identity(shape, seed):
    X = _rand(shape, seed)
    for k in range(X.ndim):
        assert np.array_equal(tenalg.fold(tenalg.unfold(X, k), k, shape), X)


@given(shapes, st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_mode_product_unfolding_commutes(shape, m, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, shape)
    for k in range(X.ndim):
        A = rng.uniform(-1, 1, (m, shape[k]))
        lhs = tenalg.unfold(tenalg.mode_product(X, k, A), k)
        rhs = A @ tenalg.unfold(X, k)
        assert np.allclose(lhs, rhs, rtol=0, atol=1e-13 * max(1.0, np.abs(rhs).max()) * shape[k])


def test_mode_product_identity_and_rank_one(rng):
    X = rng.standard_normal((3, 3, 3))
    for k in range(3):
        assert np.array_equal(tenalg.mode_product(X, k, np.eye(3)), X)
    u, v, w = rng.standard_normal(3), rng.standard_normal(4), rng.standard_normal(2)
    A = rng.standard_normal((5, 3))
    got = tenalg.mode_product(tenalg.outer_rank1(u, v, w), 0, A)
    assert np.allclose(got, tenalg.outer_rank1(A @ u, v, w), atol=1e-14)
    with pytest.raises(ValueError):
        tenalg.mode_product(X, 0, np.eye(4))


def test_mode_product_entrywise_oracle(rng):
    X = rng.standard_normal((3, 3, 3))
    A = rng.standard_normal((2, 3))
    got = tenalg.mode_product(X, 1, A)
    ref = np.einsum("mj,ijk->imk", A, X)
    assert np.allclose(got, ref, atol=1e-14)


@given(shapes, st.integers(0, 2**32 - 1))
def test_inner_isometry(shape, seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.uniform(-1, 1, shape), rng.uniform(-1, 1, shape)
    ip = tenalg.inner(X, Y)
    assert abs(ip - float(np.sum(X * Y))) <= 1e-13 * X.size
    for k in range(X.ndim):
        assert abs(ip - float(np.sum(tenalg.unfold(X, k) * tenalg.unfold(Y, k)))) <= 1e-13 * X.size
    assert tenalg.inner(X, np.zeros(shape)) == 0.0


def test_norm_and_outer():
    e = tenalg.unit(2, 0)
    E = tenalg.outer_rank1(e, e, e)
    assert tenalg.fro_norm(E) == 1.0
    assert E[0, 0, 0] == 1.0 and E.sum() == 1.0
    T = tenalg.outer_rank1([1, 2], [3, 4], [5, 6])
    assert T[1, 0, 1] == 36.0
    assert np.array_equal(tenalg.outer_rank1([3, 6], [3, 4], [5, 6]), 3 * tenalg.outer_rank1([1, 2], [3, 4], [5, 6]))


def test_kron():
    B = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(tenalg.kron(np.eye(2), B), np.block([[B, np.zeros((2, 2))], [np.zeros((2, 2)), B]]))
    assert np.array_equal(tenalg.kron(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])),
                          np.array([[3.0, 6.0], [4.0, 8.0]]))


def test_kron_mixed_product(rng):
    A, B = rng.standard_normal((2, 3)), rng.standard_normal((4, 2))
    C, D = rng.standard_normal((3, 2)), rng.standard_normal((2, 5))
    assert np.allclose(tenalg.kron(A, B) @ tenalg.kron(C, D), tenalg.kron(A @ C, B @ D), atol=1e-12)


def test_unfold_kron_relation(rng):
    # (G x_j U_j)_(k) = U_k G_(k) (U_{d} kron ... kron U_{1} without k)^T
    G = rng.standard_normal((2, 3, 2))
    U = [rng.standard_normal((n, r)) for n, r in zip((4, 5, 3), G.shape)]
    X = tenalg.multi_mode_product(G, U)
    for k in range(3):
        others = [U[j] for j in range(3) if j != k]
        K = tenalg.kron(others[1], others[0])
        assert np.allclose(tenalg.unfold(X, k), U[k] @ tenalg.unfold(G, k) @ K.T, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_multi_mode_product_properties(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (3, 3, 3))
    A, B = rng.uniform(-1, 1, (2, 3)), rng.uniform(-1, 1, (4, 3))
    ab = tenalg.mode_product(tenalg.mode_product(X, 0, A), 1, B)
    ba = tenalg.mode_product(tenalg.mode_product(X, 1, B), 0, A)
    assert np.allclose(ab, ba, rtol=0, atol=1e-13 * 9)
    assert np.allclose(tenalg.multi_mode_product(X, {1: B, 0: A}), ab, atol=1e-13 * 9)
    assert np.array_equal(tenalg.multi_mode_product(X, [np.eye(3)] * 3), X)
    Us = [np.linalg.qr(rng.standard_normal((5, 3)))[0] for _ in range(3)]
    assert abs(tenalg.fro_norm(tenalg.multi_mode_product(X, Us)) - tenalg.fro_norm(X)) <= 1e-12 * tenalg.fro_norm(X)
    Y = tenalg.multi_mode_product(X, Us)
    assert np.allclose(tenalg.multi_mode_product(Y, Us, transpose=True), X, atol=1e-12)


def test_multi_mode_product_rejects_repeats():
    with pytest.raises(ValueError):
        tenalg.multi_mode_product(np.zeros((2, 2)), [np.eye(2)])
