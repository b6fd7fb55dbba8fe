"""
sparse.py
---------

Sparse and dense matrix primitives used by the graph convolutions.

`SparseMatrix` is an immutable compressed-sparse-row operator (adjacency A_t,
propagation P_t = D_t^{-1} A_t, or the whole-graph P) backed by
`scipy.sparse.csr_matrix` in canonical form: duplicates summed and column
indices strictly increasing within every row. Dense matrices are plain
row-major float64 numpy arrays.

Usage
-----
from linalg.sparse import csr_from_edges, row_normalize, spmm

adjacency = csr_from_edges([(0, 1), (1, 2)], 3, 3, symmetrize=True)
propagation = row_normalize(adjacency)
y = spmm(propagation, x)
"""

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from core.exceptions import ShapeError

DenseMatrix = npt.NDArray[np.float64]


@dataclass(frozen=True)
class SparseMatrix:
    """Canonical CSR matrix. Treat as read-only after construction."""

    csr: sp.csr_matrix

    def __post_init__(self) -> None:
        self.csr.sum_duplicates()
        self.csr.sort_indices()

    @property
    def n_rows(self) -> int:
        return self.csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self.csr.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.csr.shape

    @property
    def row_offsets(self) -> npt.NDArray[np.int64]:
        return self.csr.indptr

    @property
    def col_indices(self) -> npt.NDArray[np.int64]:
        return self.csr.indices

    @property
    def values(self) -> DenseMatrix:
        return self.csr.data

    @property
    def nnz(self) -> int:
        return int(self.csr.nnz)

    def row_sums(self) -> DenseMatrix:
        return np.asarray(self.csr.sum(axis=1), dtype=np.float64).ravel()

    def nonzero_rows(self) -> npt.NDArray[np.bool_]:
        return np.diff(self.csr.indptr) > 0

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self.csr.transpose().tocsr())

    def to_dense(self) -> DenseMatrix:
        return self.csr.toarray()

    def permute(self, order: npt.NDArray[np.int64]) -> "SparseMatrix":
        """Relabels rows and columns: new index i holds old index order[i]."""
        return SparseMatrix(self.csr[order][:, order].tocsr())


def csr_from_edges(
    edges: Iterable[tuple[int, int]] | npt.NDArray[np.int64],
    n_rows: int,
    n_cols: int,
    symmetrize: bool = False,
) -> SparseMatrix:
    """
    Builds a unit-weight CSR matrix from (row, col) pairs. Repeated pairs are
    coalesced by summation; `symmetrize` also inserts (col, row) for every pair.
    """
    pairs = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64).reshape(-1, 2)
    rows, cols = pairs[:, 0], pairs[:, 1]
    if pairs.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n_rows or cols.max() >= n_cols):
        raise IndexError(f"edge index out of range for a {n_rows}x{n_cols} matrix")
    if symmetrize:
        if pairs.size and (cols.max() >= n_rows or rows.max() >= n_cols):
            raise IndexError(f"cannot symmetrize edges into a {n_rows}x{n_cols} matrix")
        rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
    data = np.ones(rows.shape[0], dtype=np.float64)
    matrix = sp.coo_matrix((data, (rows, cols)), shape=(n_rows, n_cols)).tocsr()
    return SparseMatrix(matrix)


def row_normalize(a: SparseMatrix) -> SparseMatrix:
    """
    Random-walk normalization P = D^{-1} A with D = diag(row sums).
    Rows without entries stay all-zero.
    """
    if a.nnz and a.values.min() < 0:
        raise ValueError("row_normalize requires non-negative values")
    degree = a.row_sums()
    counts = np.diff(a.row_offsets)
    row_degree = np.repeat(degree, counts)
    values = np.divide(a.values, row_degree, out=np.zeros_like(a.values), where=row_degree > 0)
    normalized = sp.csr_matrix((values, a.col_indices.copy(), a.row_offsets.copy()), shape=a.shape)
    return SparseMatrix(normalized)


def spmm(p: SparseMatrix, x: DenseMatrix) -> DenseMatrix:
    """Sparse x dense product; P^k is applied as k successive calls."""
    if x.ndim != 2 or p.n_cols != x.shape[0]:
        raise ShapeError(f"spmm: operator is {p.n_rows}x{p.n_cols}, dense operand is {x.shape}")
    return np.asarray(p.csr @ x, dtype=np.float64)
