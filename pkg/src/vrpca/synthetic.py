"""Synthetic dataset generation with a controlled singular spectrum.

The generator prescribes the leading six singular values explicitly,
spaced by a tunable gap, and fills the remaining spectrum with small
random values of order 1/d. Rotating that diagonal by random orthogonal
factors on both sides yields a dense data matrix whose difficulty is set
entirely by the gap parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DataMatrix

__all__ = ["SpectrumSpec", "synth_generate", "prescribed_head"]

# The leading singular values: 1, 1-lam, 1-1.1*lam, ..., 1-1.4*lam.
HEAD_SLOTS = 6
_HEAD_FACTORS = np.array([0.0, 1.0, 1.1, 1.2, 1.3, 1.4])


@dataclass(frozen=True)
class SpectrumSpec:
    """Parameters of one synthetic dataset.

    ``gap_lambda`` is the spacing of the prescribed singular values of the
    data matrix itself; note the covariance-matrix eigengap it induces is
    (1 - (1-lambda)^2) / n, a different (quadratically related) quantity.
    """

    dim_d: int
    count_n: int
    gap_lambda: float
    tail_seed: int
    matrix_seed: int

    def __post_init__(self):
        if self.dim_d < HEAD_SLOTS:
            raise ValueError(f"dim_d must be at least {HEAD_SLOTS}, got {self.dim_d}")
        if self.count_n < self.dim_d:
            raise ValueError("count_n must be at least dim_d")
        if not 0.0 < self.gap_lambda < 0.5:
            raise ValueError("gap_lambda must lie in (0, 0.5)")
        for name in ("tail_seed", "matrix_seed"):
            seed = getattr(self, name)
            if not 0 <= seed < 2**64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer")


def prescribed_head(gap_lambda: float) -> np.ndarray:
    """The six leading singular values for a given gap."""
    return 1.0 - _HEAD_FACTORS * gap_lambda


def _random_orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    # QR of a Gaussian block with the R-diagonal sign fixed gives a
    # rotation-invariant orthonormal frame, deterministically per seed.
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def synth_generate(spec: SpectrumSpec) -> DataMatrix:
    """Generate the dense d-by-n matrix U diag(sigma) V^T for ``spec``.

    The tail singular values are |g_i| / d with g_i standard normal drawn
    from ``tail_seed``; U (d-by-d) and V (n-by-d) are orthonormalized
    Gaussian matrices drawn from ``matrix_seed``. The singular values of
    the result equal the prescribed diagonal to working precision.
    """
    d, n = spec.dim_d, spec.count_n
    head = prescribed_head(spec.gap_lambda)
    tail_rng = np.random.default_rng(spec.tail_seed)
    tail = np.abs(tail_rng.standard_normal(d - HEAD_SLOTS)) / d
    if tail.size and tail.max() >= head.min():
        # Possible only for very small d; a 30-sigma event at d >= 100.
        raise ValueError(
            "a tail singular value reached the prescribed head; "
            "use a larger dim_d or a different tail_seed"
        )
    sigma = np.concatenate([head, tail])

    mat_rng = np.random.default_rng(spec.matrix_seed)
    U = _random_orthonormal(mat_rng, d, d)
    V = _random_orthonormal(mat_rng, n, d)
    X = U @ (sigma[:, None] * V.T)
    return DataMatrix.from_dense(X)
