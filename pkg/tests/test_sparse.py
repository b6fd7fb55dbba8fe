import numpy as np
import pytest
import scipy.sparse as sp

from core.exceptions import ShapeError
from linalg.sparse import SparseMatrix, csr_from_edges, row_normalize, spmm


def _random_sparse(rng, n_rows, n_cols, density=0.3):
    mask = rng.random((n_rows, n_cols)) < density
    dense = np.where(mask, rng.uniform(0.1, 2.0, size=(n_rows, n_cols)), 0.0)
    return SparseMatrix(sp.csr_matrix(dense)), dense


class TestCsrFromEdges:
    def test_repeated_pairs_are_summed(self):
        a = csr_from_edges([(0, 1), (0, 1), (1, 0)], 2, 2)
        np.testing.assert_array_equal(a.to_dense(), [[0.0, 2.0], [1.0, 0.0]])
        assert a.nnz == 2

    def test_symmetrize_inserts_reverse_pairs(self):
        a = csr_from_edges([(0, 2)], 3, 3, symmetrize=True)
        assert a.to_dense()[2, 0] == 1.0
        assert a.to_dense()[0, 2] == 1.0

    def test_columns_sorted_within_rows(self):
        a = csr_from_edges([(0, 2), (0, 0), (1, 1), (0, 1)], 2, 3)
        np.testing.assert_array_equal(a.row_offsets, [0, 3, 4])
        np.testing.assert_array_equal(a.col_indices, [0, 1, 2, 1])

    def test_out_of_range_rejected(self):
        with pytest.raises(IndexError):
            csr_from_edges([(0, 3)], 3, 3)

    def test_empty_edge_list(self):
        a = csr_from_edges([], 4, 4)
        assert a.nnz == 0
        assert a.shape == (4, 4)


class TestRowNormalize:
    def test_small_example(self):
        a = csr_from_edges([(0, 1), (0, 2), (2, 0)], 3, 3)
        np.testing.assert_allclose(row_normalize(a).to_dense(), [[0, 0.5, 0.5], [0, 0, 0], [1, 0, 0]])

    def test_rows_sum_to_one_or_zero(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 20))
            a, dense = _random_sparse(rng, n, n)
            sums = row_normalize(a).row_sums()
            empty = dense.sum(axis=1) == 0
            np.testing.assert_allclose(sums[~empty], 1.0, atol=1e-12)
            np.testing.assert_array_equal(sums[empty], 0.0)

    def test_negative_values_rejected(self):
        with pytest.raises(ValueError):
            row_normalize(SparseMatrix(sp.csr_matrix(np.array([[1.0, -1.0]]))))


class TestSpmm:
    def test_matches_dense_product(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n, m, d = (int(v) for v in rng.integers(1, 12, size=3))
            p, dense = _random_sparse(rng, n, m)
            x = rng.normal(size=(m, d))
            np.testing.assert_allclose(spmm(p, x), dense @ x, atol=1e-12)

    def test_shape_mismatch(self):
        p = csr_from_edges([(0, 1)], 2, 2)
        with pytest.raises(ShapeError):
            spmm(p, np.ones((3, 2)))

    def test_transpose_and_permute(self):
        rng = np.random.default_rng(5)
        p, dense = _random_sparse(rng, 6, 6)
        order = rng.permutation(6)
        np.testing.assert_array_equal(p.transpose().to_dense(), dense.T)
        np.testing.assert_array_equal(p.permute(order).to_dense(), dense[np.ix_(order, order)])
