"""Variance-reduced stochastic PCA solvers and benchmark tooling.

Extracts top singular vectors / principal components of a finite data
matrix with cheap stochastic iterations that nevertheless converge
exponentially, plus decaying-step and power-iteration baselines, a
controlled-spectrum synthetic generator, oracle-backed convergence
metrics, and a CLI for reproducible comparison runs.
"""

from .linalg import (
    Basis,
    DataMatrix,
    RankDeficiencyError,
    covariance_apply,
    deflated_apply,
    gram_schmidt,
    orthonormalize_columns,
)
from .fast_epoch import (
    DegenerateIterateError,
    EpochState,
    epoch_init,
    fast_normalize,
    fast_update,
    materialize,
    rebase,
    recompute_scalars,
)
from .metrics import (
    OracleResult,
    alignment,
    frobenius_objective,
    log_suboptimality,
    oracle_compute,
    suboptimality,
)
from .solvers import (
    DEFAULT_THEORY_CONSTANTS,
    ConvergenceTrace,
    SolverConfig,
    TheoryParams,
    TraceRecord,
    deflation_solve,
    heuristic_params,
    hybrid_solve,
    oja_solve,
    power_solve,
    theory_params,
    theory_satisfied,
    vrpca_epoch,
    vrpca_solve,
)
from .synthetic import SpectrumSpec, prescribed_head, synth_generate
from .dataio import (
    DatasetFormatError,
    FORMATS,
    file_sha256,
    load_dataset,
    save_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "Basis",
    "DataMatrix",
    "RankDeficiencyError",
    "covariance_apply",
    "deflated_apply",
    "gram_schmidt",
    "orthonormalize_columns",
    "DegenerateIterateError",
    "EpochState",
    "epoch_init",
    "fast_normalize",
    "fast_update",
    "materialize",
    "rebase",
    "recompute_scalars",
    "OracleResult",
    "alignment",
    "frobenius_objective",
    "log_suboptimality",
    "oracle_compute",
    "suboptimality",
    "DEFAULT_THEORY_CONSTANTS",
    "ConvergenceTrace",
    "SolverConfig",
    "TheoryParams",
    "TraceRecord",
    "deflation_solve",
    "heuristic_params",
    "hybrid_solve",
    "oja_solve",
    "power_solve",
    "theory_params",
    "theory_satisfied",
    "vrpca_epoch",
    "vrpca_solve",
    "SpectrumSpec",
    "prescribed_head",
    "synth_generate",
    "DatasetFormatError",
    "FORMATS",
    "file_sha256",
    "load_dataset",
    "save_dataset",
    "__version__",
]
