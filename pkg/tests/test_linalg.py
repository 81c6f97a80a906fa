import numpy as np
import pytest

from vrpca import (
    Basis,
    DataMatrix,
    RankDeficiencyError,
    covariance_apply,
    deflated_apply,
    gram_schmidt,
)

from conftest import random_dense_matrix, random_sparse_matrix


def entrywise_covariance(X):
    """Independent oracle: build A = (1/n) X X^T entry by entry."""
    dense = X.to_dense()
    d, n = dense.shape
    A = np.zeros((d, d))
    for i in range(n):
        for p in range(d):
            for q in range(d):
                A[p, q] += dense[p, i] * dense[q, i]
    return A / n


class TestCovarianceApply:
    def test_single_column(self):
        X = DataMatrix.from_dense(np.array([[2.0], [0.0]]))
        out = covariance_apply(X, np.array([1.0, 0.0]))
        np.testing.assert_array_equal(out, [4.0, 0.0])

    def test_identity_columns(self):
        X = DataMatrix.from_dense(np.eye(2))
        out = covariance_apply(X, np.array([3.0, -5.0]))
        np.testing.assert_allclose(out, [1.5, -2.5], rtol=0, atol=0)

    def test_matches_entrywise_oracle(self):
        rng = np.random.default_rng(11)
        X = DataMatrix.from_dense(rng.standard_normal((3, 5)))
        w = rng.standard_normal(3)
        w /= np.linalg.norm(w)
        expected = entrywise_covariance(X) @ w
        got = covariance_apply(X, w)
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(5)
        X = random_dense_matrix(12, 30, 6)
        for _ in range(10):
            U = rng.standard_normal((12, 2))
            V = rng.standard_normal((12, 2))
            a, b = rng.standard_normal(2)
            lhs = covariance_apply(X, a * U + b * V)
            rhs = a * covariance_apply(X, U) + b * covariance_apply(X, V)
            np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_agrees_with_materialized_covariance(self):
        rng = np.random.default_rng(77)
        for _ in range(15):
            d = int(rng.integers(2, 51))
            n = int(rng.integers(1, 201))
            X = DataMatrix.from_dense(rng.standard_normal((d, n)))
            A = X.covariance_dense()
            V = rng.standard_normal((d, int(rng.integers(1, 4))))
            got = covariance_apply(X, V)
            np.testing.assert_allclose(got, A @ V, rtol=1e-12, atol=1e-12)

    def test_dense_and_sparse_storage_agree(self):
        Xs = random_sparse_matrix(60, 120, 0.1, seed=9)
        Xd = DataMatrix.from_dense(Xs.to_dense())
        rng = np.random.default_rng(2)
        V = rng.standard_normal((60, 3))
        np.testing.assert_allclose(
            covariance_apply(Xs, V), covariance_apply(Xd, V), rtol=1e-12, atol=1e-14
        )
        np.testing.assert_allclose(Xs.squared_norms, Xd.squared_norms, rtol=1e-12)

    def test_accepts_basis(self):
        X = random_dense_matrix(8, 20, 3)
        b = Basis.random(8, 2, np.random.default_rng(0))
        np.testing.assert_array_equal(
            covariance_apply(X, b), covariance_apply(X, b.columns)
        )

    def test_shape_mismatch(self):
        X = random_dense_matrix(8, 20, 3)
        with pytest.raises(ValueError, match="incompatible"):
            covariance_apply(X, np.zeros(7))


class TestGramSchmidt:
    def test_identity_columns_unchanged(self):
        M = np.eye(3)[:, :2]
        out = gram_schmidt(M)
        np.testing.assert_array_equal(out.columns, M)

    def test_hand_example(self):
        out = gram_schmidt(np.array([[1.0, 1.0], [0.0, 1.0]]))
        np.testing.assert_array_equal(out.columns, np.eye(2))

    def test_identical_columns_raise(self):
        col = np.array([1.0, 2.0, -1.0])
        with pytest.raises(RankDeficiencyError):
            gram_schmidt(np.column_stack([col, col]))

    def test_orthonormality_invariant(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            d = int(rng.integers(2, 40))
            k = int(rng.integers(1, min(d, 6) + 1))
            out = gram_schmidt(rng.standard_normal((d, k)))
            gram = out.columns.T @ out.columns
            assert np.abs(gram - np.eye(k)).max() <= 1e-10

    def test_span_preserved_against_qr_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            d = int(rng.integers(3, 25))
            k = int(rng.integers(1, 5))
            M = rng.standard_normal((d, k))
            Q = gram_schmidt(M).columns
            P, _ = np.linalg.qr(M)
            diff = Q @ Q.T - P @ P.T
            assert np.linalg.norm(diff) <= 1e-8

    def test_near_orthonormal_input_barely_moves(self):
        rng = np.random.default_rng(4)
        base = gram_schmidt(rng.standard_normal((30, 4))).columns
        perturbed = base + 1e-8 * rng.standard_normal((30, 4))
        out = gram_schmidt(perturbed).columns
        assert np.abs(out - perturbed).max() <= 1e-6

    def test_too_many_columns(self):
        with pytest.raises(ValueError):
            gram_schmidt(np.ones((2, 3)))


class TestDeflatedApply:
    def test_empty_deflation(self):
        rng = np.random.default_rng(8)
        x, w = rng.standard_normal(5), rng.standard_normal(5)
        np.testing.assert_array_equal(deflated_apply(x, w, []), (x @ w) * x)

    def test_exact_cancellation(self):
        e1 = np.array([1.0, 0.0, 0.0])
        out = deflated_apply(e1, e1, [(1.0, e1)])
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_against_dense_oracle(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal(4)
        w = rng.standard_normal(4)
        v = rng.standard_normal(4)
        v /= np.linalg.norm(v)
        s = 0.7
        dense = np.outer(x, x) - s * np.outer(v, v)
        np.testing.assert_allclose(
            deflated_apply(x, w, [(s, v)]), dense @ w, rtol=1e-12, atol=1e-12
        )

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            deflated_apply(np.zeros(3), np.zeros(4), [])


class TestDataMatrix:
    def test_squared_norms_cached_and_consistent(self):
        X = random_sparse_matrix(40, 80, 0.15, seed=3)
        dense = X.to_dense()
        np.testing.assert_allclose(
            X.squared_norms, (dense * dense).sum(axis=0), rtol=1e-12
        )
        X.validate()

    def test_stats(self):
        X = DataMatrix.from_dense(np.array([[1.0, 0.0], [0.0, 2.0]]))
        assert X.max_sq_norm == 4.0
        assert X.avg_sq_norm == 2.5
        assert X.avg_nnz == 1.0

    def test_sparse_indices_must_increase(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            DataMatrix.from_sparse_columns(4, [(np.array([2, 1]), np.array([1.0, 2.0]))])

    def test_sparse_indices_in_range(self):
        with pytest.raises(ValueError, match="out of range"):
            DataMatrix.from_sparse_columns(4, [(np.array([5]), np.array([1.0]))])

    def test_zero_column_allowed(self):
        X = DataMatrix.from_sparse_columns(
            3, [(np.array([0]), np.array([2.0])), (np.array([], dtype=int), np.array([]))]
        )
        assert X.count_n == 2
        assert X.col_nnz(1) == 0
        np.testing.assert_array_equal(X.column(1), np.zeros(3))

    def test_zero_row_detection(self):
        X = DataMatrix.from_sparse_columns(3, [(np.array([0, 2]), np.array([1.0, 1.0]))])
        assert X.has_zero_rows()
        Y = DataMatrix.from_sparse_columns(
            2, [(np.array([0]), np.array([1.0])), (np.array([1]), np.array([1.0]))]
        )
        assert not Y.has_zero_rows()

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            DataMatrix.from_dense(np.array([[np.nan, 1.0]]))

    def test_immutable(self):
        X = random_dense_matrix(4, 6, 0)
        with pytest.raises(ValueError):
            X.squared_norms[0] = 7.0

    def test_col_kernels_match_dense(self):
        X = random_sparse_matrix(30, 50, 0.2, seed=12)
        dense = X.to_dense()
        rng = np.random.default_rng(1)
        v = rng.standard_normal(30)
        M = rng.standard_normal((30, 2))
        for i in (0, 7, 49):
            assert np.isclose(X.col_dot(i, v), dense[:, i] @ v, rtol=1e-12)
            np.testing.assert_allclose(X.col_dot(i, M), dense[:, i] @ M, rtol=1e-12)
            out = v.copy()
            X.col_axpy(i, 0.5, out)
            np.testing.assert_allclose(out, v + 0.5 * dense[:, i], rtol=1e-12)
            np.testing.assert_allclose(X.column(i), dense[:, i], rtol=0, atol=0)


class TestBasis:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError, match="orthonormal"):
            Basis(np.ones((3, 2)))

    def test_vector_view(self):
        b = Basis(np.array([0.0, 1.0]))
        np.testing.assert_array_equal(b.vector, [0.0, 1.0])
        with pytest.raises(ValueError):
            Basis(np.eye(2)).vector

    def test_random_is_orthonormal(self):
        b = Basis.random(20, 4, np.random.default_rng(5))
        gram = b.columns.T @ b.columns
        assert np.abs(gram - np.eye(4)).max() <= 1e-10

    def test_columns_read_only(self):
        b = Basis.random(5, 2, np.random.default_rng(5))
        with pytest.raises(ValueError):
            b.columns[0, 0] = 3.0

    def test_k_bounds(self):
        with pytest.raises(ValueError):
            Basis(np.ones((2, 3)))
