"""Evaluation metrics and the brute-force ground-truth oracle.

The oracle materializes the covariance densely and eigendecomposes it
with LAPACK, which is deliberately a different code path from the
iterative solvers it is used to judge. Both metrics are defined against
the oracle: suboptimality measures the captured-variance deficit on a
log10 scale, alignment measures squared overlap with the true leading
eigenvectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import Basis, DataMatrix, covariance_apply

__all__ = [
    "OracleResult",
    "oracle_compute",
    "frobenius_objective",
    "log_suboptimality",
    "suboptimality",
    "alignment",
    "SUBOPT_FLOOR",
    "DESK_DIM_LIMIT",
]

# Clamp on 1 - objective/optimum before taking log10, so the metric
# bottoms out at -16 instead of diverging at convergence.
SUBOPT_FLOOR = 1e-16
# Dense eigendecomposition guard; override via oracle_compute(max_dim=...).
DESK_DIM_LIMIT = 2000


@dataclass
class OracleResult:
    """Ground truth for one dataset at one target rank.

    ``eigenvalues`` holds the full non-increasing spectrum of the
    covariance; ``eigenvectors`` the top-k of them; ``opt_objective`` the
    optimum of ||X^T V||_F^2 over orthonormal V, i.e. n times the sum of
    the top-k eigenvalues.
    """

    eigenvalues: np.ndarray
    eigenvectors: Basis
    opt_objective: float
    count_n: int

    @property
    def dim_d(self) -> int:
        return self.eigenvectors.dim_d

    @property
    def rank_k(self) -> int:
        return self.eigenvectors.rank_k

    def eigenvector(self, j: int) -> np.ndarray:
        """The j-th (0-based) leading eigenvector as a (d,) array."""
        return self.eigenvectors.columns[:, j]


def oracle_compute(X: DataMatrix, k: int, max_dim: int = DESK_DIM_LIMIT) -> OracleResult:
    """Top-k eigenpairs of the materialized covariance, plus the optimum.

    Intended for desk-scale data only; raises when d exceeds ``max_dim``
    rather than silently allocating a huge dense matrix.
    """
    if not 1 <= k <= X.dim_d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={X.dim_d}")
    if X.dim_d > max_dim:
        raise ValueError(
            f"d={X.dim_d} exceeds the dense-oracle guard ({max_dim}); "
            "raise max_dim explicitly if this is intended"
        )
    A = X.covariance_dense()
    evals, evecs = np.linalg.eigh(A)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    top = Basis(evecs[:, order[:k]])
    opt = float(X.count_n * evals[:k].sum())
    return OracleResult(
        eigenvalues=evals, eigenvectors=top, opt_objective=opt, count_n=X.count_n
    )


def frobenius_objective(X: DataMatrix, basis: Basis) -> float:
    """||X^T B||_F^2, evaluated as n * trace(B^T A B) without forming X^T B."""
    B = basis.columns
    return float(X.count_n * np.sum(B * covariance_apply(X, B)))


def log_suboptimality(objective: float, reference: float) -> float:
    """log10 of the clamped deficit 1 - objective/reference."""
    return float(np.log10(max(1.0 - objective / reference, SUBOPT_FLOOR)))


def _check_match(B: Basis, oracle: OracleResult, X: DataMatrix | None = None) -> None:
    if B.dim_d != oracle.dim_d or B.rank_k != oracle.rank_k:
        raise ValueError(
            f"oracle mismatch: basis is {B.dim_d}x{B.rank_k}, "
            f"oracle is {oracle.dim_d}x{oracle.rank_k}"
        )
    if X is not None and (X.dim_d != oracle.dim_d or X.count_n != oracle.count_n):
        raise ValueError("oracle was computed for a different matrix shape")


def suboptimality(X: DataMatrix, B: Basis, oracle: OracleResult) -> float:
    """log10(1 - ||X^T B||_F^2 / opt), clamped at the floor.

    Zero exactly at the optimal subspace (reported as the floor, -16).
    """
    _check_match(B, oracle, X)
    return log_suboptimality(frobenius_objective(X, B), oracle.opt_objective)


def alignment(B: Basis, oracle: OracleResult, level: int = 0) -> float:
    """Squared overlap with the oracle eigenvectors, in [0, 1].

    For k=1 this is the squared cosine with the leading eigenvector; for
    k>1 it is ||V_k^T B||_F^2 / k, the mean squared principal cosine,
    which equals 1 exactly when the spans coincide. ``level`` shifts the
    comparison window down the spectrum (used by the deflation driver to
    score the iterate for eigenvector ``level`` against that eigenvector).
    """
    k = B.rank_k
    if level < 0 or level + k > oracle.rank_k:
        raise ValueError(
            f"oracle holds {oracle.rank_k} eigenvectors; "
            f"cannot compare rank {k} at level {level}"
        )
    if B.dim_d != oracle.dim_d:
        raise ValueError("dimension mismatch with oracle")
    V = oracle.eigenvectors.columns[:, level:level + k]
    overlap = V.T @ B.columns
    return float(np.sum(overlap * overlap) / k)
