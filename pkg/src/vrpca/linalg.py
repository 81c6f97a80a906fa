"""Column-oriented data storage and the shared linear-algebra kernels.

A dataset is a d-by-n matrix whose columns are the n instance vectors.
Every solver in this package accesses the data strictly column-wise
(column dot products and column axpy updates), so two storage layouts are
supported: a dense column-major array and a column-compressed sparse form
(per column, a strictly increasing index array plus a value array).
Squared column norms are cached at construction since both the step-size
heuristic and the theory planner need them repeatedly.

All types here are immutable after construction and safe to share
read-only across threads.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "DataMatrix",
    "Basis",
    "RankDeficiencyError",
    "covariance_apply",
    "gram_schmidt",
    "orthonormalize_columns",
    "deflated_apply",
]

# Orthonormality enforced on every Basis construction.
ORTHONORMALITY_TOL = 1e-10
# Absolute residual norm below which a column is treated as dependent.
RANK_TOL = 1e-12


class RankDeficiencyError(ValueError):
    """A column set is numerically rank deficient."""


def _column_sqnorm_sums(data: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    # reduceat mishandles empty segments, so use a cumulative-sum difference.
    cs = np.concatenate(([0.0], np.cumsum(data * data)))
    return cs[indptr[1:]] - cs[indptr[:-1]]


class DataMatrix:
    """n instance vectors in R^d stored as columns, dense or sparse.

    Use :meth:`from_dense`, :meth:`from_csc`, or :meth:`from_sparse_columns`
    to construct. Instances are immutable; the underlying arrays are marked
    read-only.
    """

    __slots__ = (
        "_dim_d",
        "_count_n",
        "_dense",
        "_indptr",
        "_indices",
        "_data",
        "_squared_norms",
        "_zero_rows",
    )

    def __init__(self, *, dim_d, count_n, dense=None, indptr=None, indices=None, data=None):
        if dim_d < 1 or count_n < 1:
            raise ValueError("matrix must have at least one row and one column")
        self._dim_d = int(dim_d)
        self._count_n = int(count_n)
        self._dense = dense
        self._indptr = indptr
        self._indices = indices
        self._data = data
        self._zero_rows = None
        if dense is not None:
            self._squared_norms = np.einsum("ij,ij->j", dense, dense)
        else:
            self._squared_norms = _column_sqnorm_sums(data, indptr)
        for arr in (dense, indptr, indices, data, self._squared_norms):
            if arr is not None:
                arr.setflags(write=False)

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_dense(cls, array) -> "DataMatrix":
        """Build from a (d, n) array whose columns are the instances."""
        arr = np.asfortranarray(array, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("data contains non-finite entries")
        return cls(dim_d=arr.shape[0], count_n=arr.shape[1], dense=arr)

    @classmethod
    def from_csc(cls, dim_d, indptr, indices, data) -> "DataMatrix":
        """Build from column-compressed arrays (one segment per column)."""
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int64)
        data = np.ascontiguousarray(data, dtype=np.float64)
        if indptr.ndim != 1 or indptr.size < 2:
            raise ValueError("indptr must be 1-D with at least two entries")
        count_n = indptr.size - 1
        if indptr[0] != 0 or indptr[-1] != indices.size or indices.size != data.size:
            raise ValueError("inconsistent column-compressed arrays")
        if np.any(np.diff(indptr) < 0):
            raise ValueError("indptr must be non-decreasing")
        if indices.size and (indices.min() < 0 or indices.max() >= dim_d):
            raise ValueError("column indices out of range")
        if not np.all(np.isfinite(data)):
            raise ValueError("data contains non-finite entries")
        for j in range(count_n):
            seg = indices[indptr[j]:indptr[j + 1]]
            if seg.size > 1 and np.any(np.diff(seg) <= 0):
                raise ValueError(f"column {j} indices are not strictly increasing")
        return cls(dim_d=dim_d, count_n=count_n, indptr=indptr, indices=indices, data=data)

    @classmethod
    def from_sparse_columns(cls, dim_d, columns: Sequence[tuple]) -> "DataMatrix":
        """Build from a sequence of (index_array, value_array) pairs."""
        indptr = np.zeros(len(columns) + 1, dtype=np.int64)
        idx_parts, val_parts = [], []
        for j, (idx, vals) in enumerate(columns):
            idx = np.asarray(idx, dtype=np.int64)
            vals = np.asarray(vals, dtype=np.float64)
            if idx.shape != vals.shape:
                raise ValueError(f"column {j}: index/value length mismatch")
            indptr[j + 1] = indptr[j] + idx.size
            idx_parts.append(idx)
            val_parts.append(vals)
        indices = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=np.int64)
        data = np.concatenate(val_parts) if val_parts else np.zeros(0, dtype=np.float64)
        return cls.from_csc(dim_d, indptr, indices, data)

    # -- basic properties --------------------------------------------------

    @property
    def dim_d(self) -> int:
        return self._dim_d

    @property
    def count_n(self) -> int:
        return self._count_n

    @property
    def is_sparse(self) -> bool:
        return self._dense is None

    @property
    def squared_norms(self) -> np.ndarray:
        """Cached per-column squared Euclidean norms."""
        return self._squared_norms

    @property
    def max_sq_norm(self) -> float:
        """Largest squared column norm (the norm bound the theory planner uses)."""
        return float(self._squared_norms.max())

    @property
    def avg_sq_norm(self) -> float:
        """Mean squared column norm (drives the practical step-size rule)."""
        return float(self._squared_norms.mean())

    @property
    def nnz(self) -> int:
        if self.is_sparse:
            return int(self._data.size)
        return int(np.count_nonzero(self._dense))

    @property
    def avg_nnz(self) -> float:
        """Average number of nonzero entries per column."""
        return self.nnz / self._count_n

    def has_zero_rows(self) -> bool:
        """True when some coordinate is zero in every column."""
        if self._zero_rows is None:
            if self.is_sparse:
                seen = np.zeros(self._dim_d, dtype=bool)
                seen[self._indices] = True
                self._zero_rows = bool(np.any(~seen))
            else:
                self._zero_rows = bool(np.any(np.abs(self._dense).sum(axis=1) == 0.0))
        return self._zero_rows

    # -- column kernels ----------------------------------------------------

    def _segment(self, i):
        s, e = self._indptr[i], self._indptr[i + 1]
        return self._indices[s:e], self._data[s:e]

    def col_nnz(self, i) -> int:
        if self.is_sparse:
            return int(self._indptr[i + 1] - self._indptr[i])
        return self._dim_d

    def col_sqnorm(self, i) -> float:
        return float(self._squared_norms[i])

    def col_dot(self, i, v):
        """Dot product of column i with a (d,) vector or (d, k) matrix."""
        if self.is_sparse:
            idx, vals = self._segment(i)
            return vals @ v[idx]
        return self._dense[:, i] @ v

    def col_axpy(self, i, coef, out) -> None:
        """In-place ``out += column_i * coef``.

        ``coef`` is a scalar when ``out`` is (d,), or a (k,) vector of
        per-column coefficients when ``out`` is (d, k).
        """
        if self.is_sparse:
            idx, vals = self._segment(i)
            if out.ndim == 1:
                out[idx] += coef * vals
            else:
                out[idx, :] += vals[:, None] * np.asarray(coef)[None, :]
        else:
            col = self._dense[:, i]
            if out.ndim == 1:
                out += coef * col
            else:
                out += col[:, None] * np.asarray(coef)[None, :]

    def column(self, i) -> np.ndarray:
        """Column i as a dense (d,) array (always a fresh copy)."""
        if self.is_sparse:
            out = np.zeros(self._dim_d)
            idx, vals = self._segment(i)
            out[idx] = vals
            return out
        return self._dense[:, i].copy()

    # -- conversions ---------------------------------------------------------

    def to_dense(self) -> np.ndarray:
        """Dense (d, n) copy of the matrix."""
        if not self.is_sparse:
            return np.array(self._dense)
        out = np.zeros((self._dim_d, self._count_n))
        for j in range(self._count_n):
            idx, vals = self._segment(j)
            out[idx, j] = vals
        return out

    def covariance_dense(self) -> np.ndarray:
        """Materialized (1/n) X X^T as a dense (d, d) array."""
        dense = self.to_dense()
        return (dense @ dense.T) / self._count_n

    def sparse_arrays(self):
        """The (indptr, indices, data) triple (sparse storage only)."""
        if not self.is_sparse:
            raise ValueError("matrix is stored densely")
        return self._indptr, self._indices, self._data

    def validate(self, rel_tol: float = 1e-12) -> None:
        """Re-check construction invariants (used by loaders and tests)."""
        if self.is_sparse:
            recomputed = _column_sqnorm_sums(self._data, self._indptr)
        else:
            recomputed = np.einsum("ij,ij->j", self._dense, self._dense)
        scale = max(1.0, float(np.abs(recomputed).max(initial=0.0)))
        if np.abs(recomputed - self._squared_norms).max(initial=0.0) > rel_tol * scale:
            raise ValueError("cached squared norms disagree with recomputation")

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"DataMatrix(d={self._dim_d}, n={self._count_n}, {kind})"


class Basis:
    """A d-by-k column-orthonormal iterate; k=1 is a unit vector.

    Orthonormality (max |B^T B - I| <= 1e-10) is enforced at construction
    and the array is frozen, so any Basis in flight is a valid iterate.
    """

    __slots__ = ("columns",)

    def __init__(self, columns):
        arr = np.array(columns, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"expected a vector or 2-D array, got shape {arr.shape}")
        d, k = arr.shape
        if not 1 <= k <= d:
            raise ValueError(f"need 1 <= k <= d, got d={d}, k={k}")
        gram = arr.T @ arr
        err = float(np.abs(gram - np.eye(k)).max())
        if not np.isfinite(err) or err > ORTHONORMALITY_TOL:
            raise ValueError(f"columns are not orthonormal (max deviation {err:.3e})")
        arr.setflags(write=False)
        self.columns = arr

    @property
    def dim_d(self) -> int:
        return self.columns.shape[0]

    @property
    def rank_k(self) -> int:
        return self.columns.shape[1]

    @property
    def vector(self) -> np.ndarray:
        """The single column as a (d,) view; only valid when k=1."""
        if self.rank_k != 1:
            raise ValueError("vector view requires rank_k == 1")
        return self.columns[:, 0]

    @classmethod
    def random(cls, dim_d, rank_k, rng: np.random.Generator) -> "Basis":
        """Orthonormalized standard-normal columns (uniform on the sphere for k=1)."""
        return gram_schmidt(rng.standard_normal((dim_d, rank_k)))

    def __repr__(self):
        return f"Basis(d={self.dim_d}, k={self.rank_k})"


def covariance_apply(X: DataMatrix, basis_or_array):
    """Apply A = (1/n) X X^T to a vector or (d, k) block without forming A.

    Accepts a :class:`Basis`, a (d,) vector, or a (d, k) array, and returns
    an array of the matching shape. The column sum is evaluated in a fixed
    order, so results are deterministic.
    """
    if isinstance(basis_or_array, Basis):
        B = basis_or_array.columns
    else:
        B = np.asarray(basis_or_array, dtype=np.float64)
    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] != X.dim_d:
        raise ValueError(f"operand shape {B.shape} incompatible with d={X.dim_d}")

    if not X.is_sparse:
        dense = X._dense
        out = dense @ (dense.T @ B)
        out /= X.count_n
    else:
        indptr, indices, data = X.sparse_arrays()
        out = np.zeros_like(B)
        for j in range(X.count_n):
            s, e = indptr[j], indptr[j + 1]
            if s == e:
                continue
            idx = indices[s:e]
            vals = data[s:e]
            proj = vals @ B[idx, :]
            out[idx, :] += vals[:, None] * proj[None, :]
        out /= X.count_n
    return out[:, 0] if squeeze else out


def orthonormalize_columns(M) -> np.ndarray:
    """Orthonormalize columns in place order, returning a writable array.

    Modified Gram-Schmidt without column pivoting, re-orthogonalized once
    when k > 1; near-orthonormal input comes back only slightly perturbed,
    which the block solvers rely on. A column whose residual drops below
    ``RANK_TOL`` after projection raises :class:`RankDeficiencyError`.
    """
    Q = np.array(M, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q[:, None]
    d, k = Q.shape
    if k > d:
        raise ValueError(f"cannot orthonormalize {k} columns in dimension {d}")
    sweeps = 2 if k > 1 else 1
    for sweep in range(sweeps):
        for j in range(k):
            col = Q[:, j]
            for i in range(j):
                col -= (Q[:, i] @ col) * Q[:, i]
            nrm = float(np.linalg.norm(col))
            if not np.isfinite(nrm) or (sweep == 0 and nrm < RANK_TOL) or nrm == 0.0:
                raise RankDeficiencyError(
                    f"column {j} is numerically dependent (residual norm {nrm:.3e})"
                )
            Q[:, j] = col / nrm
    return Q


def gram_schmidt(M) -> Basis:
    """Orthonormalize the columns of M into a :class:`Basis`.

    Same span and column order as M; see :func:`orthonormalize_columns`
    for the numerical contract.
    """
    return Basis(orthonormalize_columns(M))


def deflated_apply(x, w, deflation):
    """Evaluate (x x^T - sum_l s_l v_l v_l^T) w for one instance vector x.

    ``deflation`` is a sequence of (eigenvalue, eigenvector) pairs already
    extracted; an empty sequence reduces to the plain rank-one product.
    Used inside stochastic updates so every occurrence of x x^T w is
    deflated consistently.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != w.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs w {w.shape}")
    out = (x @ w) * x
    for s, v in deflation:
        v = np.asarray(v, dtype=np.float64)
        out = out - s * (v @ w) * v
    return out
