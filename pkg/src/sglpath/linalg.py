"""Design-matrix containers and the few kernels the solver needs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import sparse

from . import _kernels as K

__all__ = [
    "SparseColumnMatrix",
    "DenseMatrix",
    "DesignMatrix",
    "as_design",
    "matvec",
    "matvec_transpose",
    "group_columns_matvec",
    "group_columns_rmatvec",
    "group_lipschitz",
    "LipschitzEstimate",
]

_EMPTY_2D = np.zeros((0, 0), order="F")
_EMPTY_I = np.zeros(1, dtype=np.int64)
_EMPTY_F = np.zeros(0)


@dataclass(frozen=True, eq=False)
class SparseColumnMatrix:
    """Compressed-sparse-column matrix with 64-bit indices."""

    n_rows: int
    n_cols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        col_ptr = np.ascontiguousarray(self.col_ptr, dtype=np.int64)
        row_idx = np.ascontiguousarray(self.row_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if col_ptr.shape != (self.n_cols + 1,):
            raise ValueError("col_ptr must have length n_cols + 1")
        if col_ptr[0] != 0 or col_ptr[-1] != row_idx.shape[0]:
            raise ValueError("col_ptr must start at 0 and end at nnz")
        if np.any(np.diff(col_ptr) < 0):
            raise ValueError("col_ptr must be non-decreasing")
        if row_idx.shape != values.shape:
            raise ValueError("row_idx and values must have the same length")
        if row_idx.size:
            if row_idx.min() < 0 or row_idx.max() >= self.n_rows:
                raise ValueError("row index out of range")
            d = np.diff(row_idx)
            starts = col_ptr[1:-1]
            # a decrease is only allowed where a new column begins
            bad = np.flatnonzero(d <= 0) + 1
            if bad.size and not np.all(np.isin(bad, starts)):
                raise ValueError(
                    "row indices must be strictly increasing within a column")
        for name, arr in (("col_ptr", col_ptr), ("row_idx", row_idx),
                          ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.values.shape[0])

    @classmethod
    def from_triplets(cls, rows, cols, vals, shape):
        """Build from (row, col, value) triplets; duplicates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        coo = sparse.coo_matrix((vals, (rows, cols)), shape=shape)
        return cls.from_scipy(coo)

    @classmethod
    def from_scipy(cls, mat):
        csc = sparse.csc_matrix(mat, dtype=np.float64, copy=True)
        csc.sum_duplicates()
        csc.sort_indices()
        return cls(csc.shape[0], csc.shape[1], csc.indptr, csc.indices,
                   csc.data)

    @classmethod
    def from_dense(cls, arr):
        return cls.from_scipy(sparse.csc_matrix(np.asarray(arr, dtype=float)))

    def to_scipy(self):
        return sparse.csc_matrix(
            (self.values, self.row_idx, self.col_ptr), shape=self.shape)

    def to_dense(self):
        return self.to_scipy().toarray()

    def kernel_args(self):
        return (True, _EMPTY_2D, self.col_ptr, self.row_idx, self.values)


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Dense matrix held in column-major order."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asfortranarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("dense design must be two-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def to_dense(self):
        return np.array(self.values)

    def kernel_args(self):
        return (False, self.values, _EMPTY_I, _EMPTY_I, _EMPTY_F)


DesignMatrix = Union[SparseColumnMatrix, DenseMatrix]


def as_design(X) -> DesignMatrix:
    """Wrap a numpy array or scipy sparse matrix as a design matrix."""
    if isinstance(X, (SparseColumnMatrix, DenseMatrix)):
        return X
    if sparse.issparse(X):
        return SparseColumnMatrix.from_scipy(X)
    return DenseMatrix(np.asarray(X, dtype=np.float64))


def take_rows(A: DesignMatrix, rows) -> DesignMatrix:
    """Row subset, keeping the storage kind."""
    rows = np.asarray(rows)
    if isinstance(A, DenseMatrix):
        return DenseMatrix(A.values[rows, :])
    return SparseColumnMatrix.from_scipy(A.to_scipy()[rows, :])


def scale_columns(A: DesignMatrix, factors) -> DesignMatrix:
    factors = np.asarray(factors, dtype=np.float64)
    if isinstance(A, DenseMatrix):
        return DenseMatrix(A.values * factors[None, :])
    counts = np.diff(A.col_ptr)
    return SparseColumnMatrix(A.n_rows, A.n_cols, A.col_ptr, A.row_idx,
                              A.values * np.repeat(factors, counts))


def column_moments(A: DesignMatrix):
    """Column means and population standard deviations.

    Sums run over stored entries only, in row order, so dense and sparse
    copies of the same matrix give identical results.
    """
    n = A.n_rows
    if isinstance(A, DenseMatrix):
        s1 = np.array([_ordered_sum(A.values[:, j]) for j in range(A.n_cols)])
        s2 = np.array([_ordered_sum(A.values[:, j] ** 2)
                       for j in range(A.n_cols)])
    else:
        s1 = np.empty(A.n_cols)
        s2 = np.empty(A.n_cols)
        for j in range(A.n_cols):
            v = A.values[A.col_ptr[j]:A.col_ptr[j + 1]]
            s1[j] = _ordered_sum(v)
            s2[j] = _ordered_sum(v ** 2)
    mean = s1 / n
    var = np.maximum(s2 / n - mean ** 2, 0.0)
    return mean, np.sqrt(var)


def _ordered_sum(v):
    # both storage kinds hand over the same nonzeros in the same order
    return float(np.sum(v[v != 0.0]))


def _check_len(v, n, what):
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != n:
        raise ValueError(f"dimension mismatch: {what} has length "
                         f"{v.shape[0] if v.ndim == 1 else v.shape}, "
                         f"expected {n}")
    return v


def _check_range(A, cols):
    c0, c1 = (cols.start, cols.stop) if isinstance(cols, range) else cols
    if cols is not None and isinstance(cols, range) and cols.step != 1:
        raise ValueError("column range must be contiguous")
    if not (0 <= c0 <= c1 <= A.n_cols):
        raise ValueError(f"column range [{c0}, {c1}) out of bounds for "
                         f"{A.n_cols} columns")
    return int(c0), int(c1)


def matvec(A: DesignMatrix, x) -> np.ndarray:
    """A @ x."""
    x = _check_len(x, A.n_cols, "x")
    out = np.zeros(A.n_rows)
    K.matvec(*A.kernel_args(), 0, A.n_cols, x, out)
    return out


def matvec_transpose(A: DesignMatrix, y) -> np.ndarray:
    """A.T @ y."""
    y = _check_len(y, A.n_rows, "y")
    out = np.empty(A.n_cols)
    K.rmatvec(*A.kernel_args(), 0, A.n_cols, y, out)
    return out


def group_columns_matvec(A: DesignMatrix, cols, x_g) -> np.ndarray:
    """A[:, c0:c1] @ x_g without forming the submatrix.

    ``cols`` is a ``(start, stop)`` pair or a unit-step ``range``.
    """
    c0, c1 = _check_range(A, cols)
    x_g = _check_len(x_g, c1 - c0, "x_g")
    out = np.zeros(A.n_rows)
    K.matvec(*A.kernel_args(), c0, c1, x_g, out)
    return out


def group_columns_rmatvec(A: DesignMatrix, cols, y) -> np.ndarray:
    """A[:, c0:c1].T @ y without forming the submatrix."""
    c0, c1 = _check_range(A, cols)
    y = _check_len(y, A.n_rows, "y")
    out = np.empty(c1 - c0)
    K.rmatvec(*A.kernel_args(), c0, c1, y, out)
    return out


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    converged: bool
    used_frobenius: bool


_SAFETY = 1.0 + 1e-10
_RESTART_SEED = 20240917


def group_lipschitz(A: DesignMatrix, cols, scale: float, tol: float = 1e-6,
                    max_iter: int = 500, *, full: bool = False):
    """Largest eigenvalue of ``scale * G.T @ G`` for the column block G.

    Power iteration from the normalized all-ones vector (restarted from a
    fixed pseudorandom vector if that start lies in the null space). The
    estimate is inflated by a factor 1 + 1e-10. If the iteration does not
    converge within ``max_iter`` steps, the squared Frobenius norm (times
    ``scale``) is returned instead, which always dominates.

    Returns a float, or a :class:`LipschitzEstimate` when ``full`` is set.
    """
    if not tol > 0 or max_iter < 1 or not scale > 0:
        raise ValueError("need tol > 0, max_iter >= 1 and scale > 0")
    c0, c1 = _check_range(A, cols)
    m = c1 - c0
    args = A.kernel_args()
    if m == 0:
        est = LipschitzEstimate(0.0, True, False)
        return est if full else est.value
    mu, ok, frob = K.gram_power_iteration(*args, c0, c1, float(scale),
                                          float(tol), int(max_iter),
                                          np.ones(m))
    if frob > 0 and mu == 0.0:
        v0 = np.random.default_rng(_RESTART_SEED).standard_normal(m)
        mu, ok, frob = K.gram_power_iteration(*args, c0, c1, float(scale),
                                              float(tol), int(max_iter), v0)
    if frob == 0.0:
        est = LipschitzEstimate(0.0, True, False)
    elif ok:
        est = LipschitzEstimate(mu * _SAFETY, True, False)
    else:
        est = LipschitzEstimate(frob, False, True)
    return est if full else est.value
