import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sglpath import linalg
from sglpath.linalg import DenseMatrix, SparseColumnMatrix


def triple_loop_matvec(A, x):
    n, p = A.shape
    out = np.zeros(n)
    for i in range(n):
        for j in range(p):
            out[i] += A[i, j] * x[j]
    return out


def random_sparse(rng, n, p, density=0.4):
    return sp.random(n, p, density=density, format="csc", random_state=rng,
                     data_rvs=rng.standard_normal)


def both(A):
    """Sparse and dense wrappers of the same matrix."""
    A = sp.csc_matrix(A)
    return SparseColumnMatrix.from_scipy(A), DenseMatrix(A.toarray())


class TestConstruction:
    def test_invariants_checked(self):
        with pytest.raises(ValueError):
            SparseColumnMatrix(2, 2, np.array([0, 1, 0]), np.array([0]),
                               np.array([1.0]))
        with pytest.raises(ValueError):
            # rows within a column must increase
            SparseColumnMatrix(3, 1, np.array([0, 2]), np.array([2, 1]),
                               np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            SparseColumnMatrix(2, 1, np.array([0, 1]), np.array([5]),
                               np.array([1.0]))

    def test_duplicate_triplets_summed(self):
        A = SparseColumnMatrix.from_triplets([0, 0, 1], [1, 1, 0],
                                             [1.0, 2.5, -1.0], (2, 2))
        np.testing.assert_array_equal(A.to_dense(), [[0, 3.5], [-1, 0]])

    def test_64bit_indices(self):
        A = SparseColumnMatrix.from_dense(np.eye(3))
        assert A.col_ptr.dtype == np.int64
        assert A.row_idx.dtype == np.int64

    def test_dense_shape(self):
        D = DenseMatrix(np.ones((3, 2)))
        assert D.shape == (3, 2)
        assert D.values.size == 6


class TestMatvec:
    def test_identity(self):
        A = SparseColumnMatrix.from_dense(np.eye(2))
        np.testing.assert_array_equal(linalg.matvec(A, [3.0, -1.0]), [3, -1])

    def test_zero_matrix(self):
        A = SparseColumnMatrix.from_triplets([], [], [], (3, 2))
        np.testing.assert_array_equal(linalg.matvec(A, [1.0, 1.0]), [0, 0, 0])

    def test_random_vs_triple_loop(self):
        rng = np.random.default_rng(0)
        A = random_sparse(rng, 5, 4)
        x = rng.standard_normal(4)
        ref = triple_loop_matvec(A.toarray(), x)
        for M in both(A):
            np.testing.assert_allclose(linalg.matvec(M, x), ref, rtol=1e-14,
                                       atol=1e-14)

    def test_dimension_mismatch(self):
        A = SparseColumnMatrix.from_dense(np.eye(2))
        with pytest.raises(ValueError, match="dimension"):
            linalg.matvec(A, np.ones(3))


class TestMatvecTranspose:
    def test_identity(self):
        A = SparseColumnMatrix.from_dense(np.eye(2))
        np.testing.assert_array_equal(linalg.matvec_transpose(A, [3.0, -1.0]),
                                      [3, -1])

    def test_forced_sum(self):
        A = SparseColumnMatrix.from_dense(np.array([[1.0], [2.0], [3.0]]))
        np.testing.assert_array_equal(linalg.matvec_transpose(A, np.ones(3)),
                                      [6])

    def test_random_vs_dense(self):
        rng = np.random.default_rng(1)
        A = random_sparse(rng, 7, 5)
        y = rng.standard_normal(7)
        ref = triple_loop_matvec(A.toarray().T, y)
        for M in both(A):
            np.testing.assert_allclose(linalg.matvec_transpose(M, y), ref,
                                       rtol=1e-14, atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            linalg.matvec_transpose(DenseMatrix(np.eye(2)), np.ones(3))


class TestGroupColumns:
    def test_full_range_equals_matvec(self):
        rng = np.random.default_rng(2)
        A = random_sparse(rng, 6, 5)
        x = rng.standard_normal(5)
        for M in both(A):
            np.testing.assert_array_equal(
                linalg.group_columns_matvec(M, (0, 5), x),
                linalg.matvec(M, x))

    def test_empty_range(self):
        M = DenseMatrix(np.ones((4, 3)))
        np.testing.assert_array_equal(
            linalg.group_columns_matvec(M, (1, 1), np.zeros(0)), np.zeros(4))
        assert linalg.group_columns_rmatvec(M, (2, 2), np.ones(4)).size == 0

    def test_subrange_vs_slice(self):
        rng = np.random.default_rng(3)
        A = random_sparse(rng, 8, 9)
        dense = A.toarray()
        x = rng.standard_normal(4)
        y = rng.standard_normal(8)
        for M in both(A):
            np.testing.assert_allclose(
                linalg.group_columns_matvec(M, range(2, 6), x),
                dense[:, 2:6] @ x, atol=1e-14)
            np.testing.assert_allclose(
                linalg.group_columns_rmatvec(M, (2, 6), y),
                dense[:, 2:6].T @ y, atol=1e-14)

    def test_out_of_bounds(self):
        M = DenseMatrix(np.ones((2, 3)))
        with pytest.raises(ValueError, match="out of bounds"):
            linalg.group_columns_matvec(M, (2, 5), np.ones(3))
        with pytest.raises(ValueError, match="contiguous"):
            linalg.group_columns_rmatvec(M, range(0, 3, 2), np.ones(2))


class TestGroupLipschitz:
    def test_ones_column(self):
        n = 9
        A = DenseMatrix(np.ones((n, 1)))
        assert linalg.group_lipschitz(A, (0, 1), 1.0 / n) == \
            pytest.approx(1.0, rel=1e-9)

    def test_orthogonal_columns(self):
        n = 16
        Q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((n, 3)))
        A = DenseMatrix(Q * np.sqrt(n))
        assert linalg.group_lipschitz(A, (0, 3), 1.0 / n) == \
            pytest.approx(1.0, rel=1e-8)

    def test_random_block_vs_eigh(self):
        rng = np.random.default_rng(5)
        B = rng.standard_normal((20, 5))
        ref = np.linalg.eigvalsh(B.T @ B / 20)[-1]
        for M in both(B):
            est = linalg.group_lipschitz(M, (0, 5), 1 / 20, tol=1e-12,
                                         max_iter=100_000)
            assert est == pytest.approx(ref, rel=1e-8)
            assert est >= ref

    def test_frobenius_fallback(self):
        rng = np.random.default_rng(6)
        B = rng.standard_normal((10, 4))
        est = linalg.group_lipschitz(DenseMatrix(B), (0, 4), 1.0, tol=1e-15,
                                     max_iter=1, full=True)
        assert est.used_frobenius and not est.converged
        assert est.value == pytest.approx(np.sum(B * B))

    def test_orthogonal_start_restarts(self):
        # the all-ones start is in the null space of this block
        B = np.array([[1.0, -1.0], [1.0, -1.0]])
        est = linalg.group_lipschitz(DenseMatrix(B), (0, 2), 1.0)
        assert est == pytest.approx(4.0, rel=1e-6)

    def test_zero_block(self):
        assert linalg.group_lipschitz(DenseMatrix(np.zeros((3, 2))), (0, 2),
                                      1.0) == 0.0

    def test_bad_args(self):
        with pytest.raises(ValueError):
            linalg.group_lipschitz(DenseMatrix(np.eye(2)), (0, 2), 0.0)

    def test_majorizes_random_directions(self):
        rng = np.random.default_rng(7)
        B = rng.standard_normal((30, 6))
        scale = 1 / 30
        t_inv = linalg.group_lipschitz(DenseMatrix(B), (0, 6), scale)
        V = rng.standard_normal((1000, 6))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        quad = np.einsum("ij,jk,ik->i", V, scale * B.T @ B, V)
        assert np.all(quad <= t_inv * (1 + 1e-9))


class TestHelpers:
    def test_take_rows_keeps_kind(self):
        rng = np.random.default_rng(8)
        A = random_sparse(rng, 6, 3)
        S, D = both(A)
        rows = np.array([4, 0, 2])
        assert isinstance(linalg.take_rows(S, rows), SparseColumnMatrix)
        np.testing.assert_array_equal(linalg.take_rows(S, rows).to_dense(),
                                      linalg.take_rows(D, rows).to_dense())

    def test_column_moments_agree(self):
        rng = np.random.default_rng(9)
        A = random_sparse(rng, 12, 4)
        (m1, s1), (m2, s2) = [linalg.column_moments(M) for M in both(A)]
        np.testing.assert_array_equal(m1, m2)
        np.testing.assert_array_equal(s1, s2)
        np.testing.assert_allclose(m1, A.toarray().mean(axis=0))
        np.testing.assert_allclose(s1, A.toarray().std(axis=0))


matrices = hnp.arrays(np.float64, st.tuples(st.integers(1, 8),
                                            st.integers(1, 8)),
                      elements=st.one_of(st.just(0.0),
                                         st.floats(-10, 10, width=32)))


@settings(max_examples=60, deadline=None)
@given(matrices, st.integers(0, 2**32 - 1))
def test_sparse_dense_agree(A, seed):
    rng = np.random.default_rng(seed)
    n, p = A.shape
    x = rng.standard_normal(p)
    y = rng.standard_normal(n)
    S, D = both(A)
    for f, v in ((linalg.matvec, x), (linalg.matvec_transpose, y)):
        a, b = f(S, v), f(D, v)
        np.testing.assert_allclose(a, b, rtol=1e-12,
                                   atol=1e-12 * max(1.0, np.abs(b).max()))


@settings(max_examples=60, deadline=None)
@given(matrices, st.integers(0, 2**32 - 1))
def test_gram_psd(A, seed):
    x = np.random.default_rng(seed).standard_normal(A.shape[1])
    for M in both(A):
        val = linalg.matvec_transpose(M, linalg.matvec(M, x)) @ x
        assert val >= -1e-12 * max(1.0, np.sum(A * A) * (x @ x))
