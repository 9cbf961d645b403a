"""Dense and sparse linear-algebra primitives.

CSR storage with sorted column indices serves matrix-vector products,
Gauss-Seidel sweeps and assembly alike. Dense reduced objects (the basis block,
projected matrices) are plain numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from . import _kernels
from .work import record

__all__ = [
    "CSRMatrix",
    "CholeskyFactor",
    "NotPositiveDefiniteError",
    "spmv",
    "residual",
    "dot",
    "norm2",
    "axpy",
    "mgs_append",
    "cholesky_factor",
    "cholesky_solve",
    "read_mtx",
    "write_mtx",
    "save_vector",
    "load_vector",
]


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot is not strictly positive."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


def _readonly(a):
    a.flags.writeable = False
    return a


class CSRMatrix:
    """Compressed-row matrix with strictly increasing columns in each row.

    Parameters
    ----------
    row_offsets, col_indices, values : array_like
        Standard CSR arrays.
    shape : tuple of int
    symmetric : bool
        Asserts that the stored pattern and values are exactly symmetric.
        Checked on construction when ``check`` is true.
    """

    def __init__(self, row_offsets, col_indices, values, shape, symmetric=False, check=True):
        self.row_offsets = _readonly(np.ascontiguousarray(row_offsets, dtype=np.int64))
        self.col_indices = _readonly(np.ascontiguousarray(col_indices, dtype=np.int64))
        self.values = _readonly(np.ascontiguousarray(values, dtype=np.float64))
        self.n_rows, self.n_cols = int(shape[0]), int(shape[1])
        self.symmetric = bool(symmetric)
        self._diag = None
        if check:
            self.validate()

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def max_row_nnz(self) -> int:
        return int(np.diff(self.row_offsets).max(initial=0))

    def validate(self):
        ptr, idx = self.row_offsets, self.col_indices
        if ptr.size != self.n_rows + 1 or ptr[0] != 0:
            raise ValueError("row_offsets must have length n_rows+1 and start at 0")
        if np.any(np.diff(ptr) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if ptr[-1] != self.values.size or idx.size != self.values.size:
            raise ValueError("row_offsets[-1], len(col_indices) and len(values) disagree")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_cols):
            raise ValueError("column index out of range")
        # strictly increasing inside every row
        steps = np.diff(idx)
        row_start = np.zeros(idx.size, dtype=bool)
        row_start[ptr[1:-1][ptr[1:-1] < idx.size]] = True
        if np.any((steps <= 0) & ~row_start[1:]):
            raise ValueError("column indices must be strictly increasing within each row")
        if self.symmetric:
            if self.n_rows != self.n_cols:
                raise ValueError("symmetric matrix must be square")
            t = self.to_scipy().T.tocsr()
            t.sort_indices()
            if not (
                np.array_equal(t.indptr, ptr)
                and np.array_equal(t.indices, idx)
                and np.array_equal(t.data.view(np.uint64), self.values.view(np.uint64))
            ):
                raise ValueError("matrix flagged symmetric is not bitwise symmetric")

    def diagonal(self) -> np.ndarray:
        if self._diag is None:
            d = np.empty(self.n_rows)
            _kernels.csr_diagonal(self.row_offsets, self.col_indices, self.values, d)
            self._diag = _readonly(d)
        return self._diag

    def with_values(self, values, symmetric=None) -> "CSRMatrix":
        """Same pattern, new values (no revalidation of the pattern)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ValueError("values do not match the sparsity pattern")
        return CSRMatrix(
            self.row_offsets, self.col_indices, values, self.shape,
            symmetric=self.symmetric if symmetric is None else symmetric, check=False,
        )

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @classmethod
    def from_scipy(cls, m, symmetric=False) -> "CSRMatrix":
        m = sp.csr_matrix(m, dtype=np.float64, copy=True)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.indptr, m.indices, m.data, m.shape, symmetric=symmetric)

    @classmethod
    def from_dense(cls, a, symmetric=False) -> "CSRMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=np.float64)), symmetric=symmetric)

    @classmethod
    def identity(cls, n: int) -> "CSRMatrix":
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), (n, n), symmetric=True)

    def __repr__(self):
        return f"CSRMatrix(shape={self.shape}, nnz={self.nnz}, symmetric={self.symmetric})"


def _check_len(x, n, what="vector"):
    if x.ndim != 1 or x.shape[0] != n:
        raise ValueError(f"{what} has length {x.shape}, expected {n}")


def spmv(A: CSRMatrix, x, out=None) -> np.ndarray:
    """Return ``A @ x`` with a fixed per-row summation order."""
    x = np.asarray(x, dtype=np.float64)
    _check_len(x, A.n_cols)
    if out is None:
        out = np.empty(A.n_rows)
    _kernels.csr_matvec(A.row_offsets, A.col_indices, A.values, x, out)
    record(spmv=1, spmv_flops=2 * A.nnz)
    return out


def residual(A: CSRMatrix, b, x, out=None) -> np.ndarray:
    """Return ``b - A @ x``; counted as one SpMV."""
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_len(x, A.n_cols)
    _check_len(b, A.n_rows, "right-hand side")
    if out is None:
        out = np.empty(A.n_rows)
    _kernels.csr_residual(A.row_offsets, A.col_indices, A.values, b, x, out)
    record(spmv=1, spmv_flops=2 * A.nnz + A.n_rows)
    return out


def dot(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    record(full_flops=2 * x.size)
    return float(np.dot(x, y))


def norm2(x) -> float:
    """Euclidean norm."""
    x = np.asarray(x, dtype=np.float64)
    record(full_flops=2 * x.size)
    return float(np.sqrt(np.dot(x, x)))


def axpy(alpha: float, x, y) -> np.ndarray:
    """Return ``alpha * x + y`` as a new array."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    record(full_flops=2 * x.size)
    return alpha * x + y


def mgs_append(W, v, drop_tol: float = 1e-10):
    """Orthonormalize ``v`` against the columns of ``W`` and append it.

    Modified Gram-Schmidt followed by one unconditional second pass.

    Parameters
    ----------
    W : ndarray, shape (n, N)
        Orthonormal columns; ``N`` may be zero.
    v : ndarray, shape (n,)
    drop_tol : float
        Relative norm below which the projected vector counts as dependent.

    Returns
    -------
    ndarray or None
        ``W`` with one extra unit column (Fortran order), or None when ``v``
        is (numerically) in the span of ``W``.
    """
    W = np.asarray(W, dtype=np.float64)
    v = np.array(v, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError("W must be two-dimensional")
    _check_len(v, W.shape[0])
    vnorm = np.linalg.norm(v)
    if not np.isfinite(vnorm):
        raise ValueError("non-finite vector passed to mgs_append")
    if vnorm == 0.0:
        return None
    n, N = W.shape
    for _ in range(2):
        for j in range(N):
            w = W[:, j]
            v -= np.dot(w, v) * w
    record(full_flops=2 * 4 * n * N + 3 * n)
    wnorm = np.linalg.norm(v)
    if wnorm < drop_tol * vnorm:
        return None
    out = np.empty((n, N + 1), order="F")
    out[:, :N] = W
    out[:, N] = v / wnorm
    return out


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor ``L`` with ``L @ L.T`` equal to the input."""

    lower: np.ndarray

    @property
    def n(self) -> int:
        return self.lower.shape[0]


def cholesky_factor(M, rtol: float = 1e-12) -> CholeskyFactor:
    M = np.array(M, dtype=np.float64, ndmin=2)
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    n = M.shape[0]
    scale = np.abs(M).max(initial=0.0)
    if n and np.abs(M - M.T).max() > rtol * scale:
        raise ValueError("matrix is not symmetric")
    if n == 0:
        return CholeskyFactor(np.zeros((0, 0)))
    L, info = scipy.linalg.lapack.dpotrf(M, lower=1, clean=1)
    record(reduced_flops=n**3 // 3 + n)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"illegal argument {-info} to dpotrf")
    return CholeskyFactor(L)


def cholesky_solve(F: CholeskyFactor, b) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    _check_len(b, F.n, "right-hand side")
    if F.n == 0:
        return np.zeros(0)
    record(reduced_flops=2 * F.n * F.n)
    return scipy.linalg.cho_solve((F.lower, True), b, check_finite=False)


# -- file formats ---------------------------------------------------------


def write_mtx(path, A: CSRMatrix) -> None:
    """Write Matrix Market coordinate real (symmetric when flagged)."""
    m = A.to_scipy().tocoo()
    if A.symmetric:
        keep = m.row >= m.col
        m = sp.coo_matrix((m.data[keep], (m.row[keep], m.col[keep])), shape=m.shape)
        scipy.io.mmwrite(str(path), m, symmetry="symmetric", precision=17)
    else:
        scipy.io.mmwrite(str(path), m, symmetry="general", precision=17)


def read_mtx(path) -> CSRMatrix:
    path = str(path)
    _, _, _, fmt, field, symm = scipy.io.mminfo(path)
    if field not in ("real", "integer") or fmt != "coordinate":
        raise ValueError(f"unsupported Matrix Market layout: {fmt} {field}")
    m = scipy.io.mmread(path).tocoo()
    symmetric = symm == "symmetric"
    if symmetric:
        # mmread mirrors the triangle; rebuild so mirrored values are the same bits
        keep = m.row >= m.col
        r, c, d = m.row[keep], m.col[keep], m.data[keep]
        off = r != c
        m = sp.coo_matrix(
            (np.concatenate([d, d[off]]), (np.concatenate([r, c[off]]), np.concatenate([c, r[off]]))),
            shape=m.shape,
        )
    return CSRMatrix.from_scipy(m.tocsr(), symmetric=symmetric)


def save_vector(path, v, binary: bool | None = None) -> None:
    """Write a vector as text (one value per line) or little-endian float64."""
    path = Path(path)
    v = np.asarray(v, dtype=np.float64)
    if binary is None:
        binary = path.suffix == ".bin"
    if binary:
        v.astype("<f8").tofile(path)
    else:
        np.savetxt(path, v, fmt="%.17g")


def load_vector(path, binary: bool | None = None) -> np.ndarray:
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".bin"
    if binary:
        return np.fromfile(path, dtype="<f8").astype(np.float64)
    return np.atleast_1d(np.loadtxt(path, dtype=np.float64))
