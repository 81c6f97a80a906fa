"""Shared dataset factories for the test suite."""

from functools import lru_cache

import numpy as np

from vrpca import DataMatrix, SpectrumSpec, oracle_compute, synth_generate


@lru_cache(maxsize=None)
def synth_case(lam, n=1000, d=100, seed=42, rank=1):
    """A cached synthetic dataset plus its oracle at the given rank."""
    spec = SpectrumSpec(
        dim_d=d, count_n=n, gap_lambda=lam, tail_seed=seed, matrix_seed=seed + 1
    )
    X = synth_generate(spec)
    return X, oracle_compute(X, rank)


def random_sparse_matrix(d, n, density, seed):
    """A random sparse column matrix with no all-zero rows."""
    rng = np.random.default_rng(seed)
    cols = []
    for _ in range(n):
        mask = rng.random(d) < density
        idx = np.nonzero(mask)[0]
        cols.append((idx, rng.standard_normal(idx.size)))
    X = DataMatrix.from_sparse_columns(d, cols)
    assert not X.has_zero_rows(), "pick a different seed: generated a zero row"
    return X


def random_dense_matrix(d, n, seed):
    rng = np.random.default_rng(seed)
    return DataMatrix.from_dense(rng.standard_normal((d, n)))
