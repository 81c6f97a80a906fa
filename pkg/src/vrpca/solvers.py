"""Iterative solvers for the top singular vectors of a data matrix.

Four solvers share one calling convention (data, config, initial basis,
optional per-epoch observer and metric oracle) and return the final
iterate together with a per-epoch convergence trace:

* ``vrpca_solve`` -- variance-reduced stochastic iterations: each epoch
  freezes an anchor, computes the full covariance product at the anchor
  once, then runs m cheap stochastic steps whose noise shrinks with the
  distance to the anchor. Converges exponentially in epochs.
* ``oja_solve`` -- classic decaying-step stochastic iteration, the
  baseline the variance reduction improves on.
* ``power_solve`` -- deterministic power iterations on the covariance.
* ``hybrid_solve`` -- one decaying-step pass to warm-start, then the
  variance-reduced solver.

``deflation_solve`` recovers eigenvectors one-by-one by subtracting the
already-found components from every covariance product. The two
parameter planners pick (step, epoch length): ``heuristic_params`` is the
data-driven default; ``theory_params`` evaluates the sufficient
conditions for provable convergence at given confidence/accuracy.

Effective data passes are the cost unit of every trace: touching all n
columns once is one pass, so an epoch with m stochastic steps costs
1 + m/n passes (2 when m = n), a decaying-step pass costs 1, and a power
round costs 1. Each solver run owns one seeded generator and is
sequential, so runs are reproducible from (seed, config); independent
runs can execute in parallel freely.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .fast_epoch import (
    DegenerateIterateError,
    epoch_init,
    fast_normalize,
    fast_update,
    materialize,
)
from .linalg import Basis, DataMatrix, covariance_apply, orthonormalize_columns
from .metrics import OracleResult, alignment, frobenius_objective, log_suboptimality

__all__ = [
    "SolverConfig",
    "TraceRecord",
    "ConvergenceTrace",
    "TheoryParams",
    "DEFAULT_THEORY_CONSTANTS",
    "vrpca_epoch",
    "vrpca_solve",
    "oja_solve",
    "power_solve",
    "hybrid_solve",
    "deflation_solve",
    "theory_params",
    "theory_satisfied",
    "heuristic_params",
]

Observer = Callable[[int, Basis], None]
DeflationPairs = Sequence[tuple[float, np.ndarray]]

# A deflation level whose final iterate still moves by more than this
# (in 1 - cos^2 between consecutive epochs) gets a trace warning.
_CONVERGENCE_DRIFT_TOL = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver parameters.

    ``step_eta``/``epoch_len_m``/``epochs_T`` drive the variance-reduced
    solver; ``oja_step_c`` is the numerator of the decaying step c/t;
    ``power_iters`` the number of power rounds. ``epochs_T = 0`` and
    ``step_eta = 0`` are permitted as degenerate cases (they make the
    hybrid reduce exactly to its components). With ``determinism`` set,
    emitted trace files are byte-reproducible for identical configs.
    """

    step_eta: float
    epoch_len_m: int
    epochs_T: int
    seed: int = 0
    rank_k: int = 1
    oja_step_c: float = 1.0
    power_iters: int = 100
    determinism: bool = True

    def __post_init__(self):
        if not self.step_eta >= 0.0:
            raise ValueError("step_eta must be non-negative")
        if self.epoch_len_m < 1:
            raise ValueError("epoch_len_m must be at least 1")
        if self.epochs_T < 0:
            raise ValueError("epochs_T must be non-negative")
        if self.rank_k < 1:
            raise ValueError("rank_k must be at least 1")
        if not self.oja_step_c >= 0.0:
            raise ValueError("oja_step_c must be non-negative")
        if self.power_iters < 1:
            raise ValueError("power_iters must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass
class TraceRecord:
    """One per-epoch measurement; metric fields are None without an oracle."""

    epoch_index: int
    effective_passes: float
    log10_suboptimality: Optional[float]
    alignment_sq: Optional[float]
    wall_millis: float
    objective: float


@dataclass
class ConvergenceTrace:
    """Ordered per-epoch records plus the config and metric reference used."""

    records: list[TraceRecord]
    config_echo: SolverConfig
    metric_reference: float
    warnings: list[str] = field(default_factory=list)

    def validate(self) -> None:
        passes = [r.effective_passes for r in self.records]
        epochs = [r.epoch_index for r in self.records]
        if any(b < a for a, b in zip(passes, passes[1:])):
            raise ValueError("effective_passes must be non-decreasing")
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("epoch_index must be strictly increasing")

    def final(self) -> TraceRecord:
        return self.records[-1]


def _draw_indices(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    # Generator.integers uses rejection sampling, so the draw is uniform
    # without modulo bias; one batch per epoch keeps both the naive and
    # the amortized path on the same index sequence.
    return rng.integers(0, n, size=m, dtype=np.int64)


def _check_init(X: DataMatrix, cfg: SolverConfig, init: Basis) -> None:
    if init.dim_d != X.dim_d:
        raise ValueError(f"init has d={init.dim_d}, data has d={X.dim_d}")
    if init.rank_k != cfg.rank_k:
        raise ValueError(f"init has k={init.rank_k}, config expects k={cfg.rank_k}")


def _deflation_arrays(deflation: DeflationPairs):
    if not deflation:
        return None, None
    Vd = np.column_stack([np.asarray(v, dtype=np.float64) for _, v in deflation])
    svals = np.array([s for s, _ in deflation], dtype=np.float64)
    if np.any(svals < 0):
        raise ValueError("deflation eigenvalues must be non-negative")
    return Vd, svals


def _evaluate(X, basis, oracle, deflation):
    """(log10 suboptimality, alignment, raw objective) for one iterate.

    With deflation pairs present the objective and the oracle reference
    both live on the deflated problem, so the metrics describe progress
    toward the eigenvector at the current level.
    """
    level = len(deflation)
    obj = frobenius_objective(X, basis)
    if level:
        Vd, svals = _deflation_arrays(deflation)
        overlap = Vd.T @ basis.columns
        obj -= X.count_n * float(svals @ np.sum(overlap * overlap, axis=1))
    if oracle is None:
        return None, None, obj
    ref = _metric_reference(X, oracle, basis.rank_k, level)
    return log_suboptimality(obj, ref), alignment(basis, oracle, level=level), obj


def _metric_reference(X, oracle, k, level):
    if oracle is None:
        return float("nan")
    return float(X.count_n * np.sum(oracle.eigenvalues[level:level + k]))


# -- variance-reduced solver --------------------------------------------------


def _epoch_k1_naive(X, anchor_vec, eta, idxs, deflation):
    """One epoch on a single vector, O(d) per step."""
    Vd, svals = _deflation_arrays(deflation)
    u = covariance_apply(X, anchor_vec)
    if Vd is not None:
        anchor_proj = Vd.T @ anchor_vec
        u -= Vd @ (svals * anchor_proj)
    w = anchor_vec.copy()
    if eta == 0.0:
        return w
    for i in idxs:
        cw = float(X.col_dot(i, w))
        ca = float(X.col_dot(i, anchor_vec))
        if Vd is not None:
            corr = Vd @ (svals * (Vd.T @ w - anchor_proj))
        w += eta * u
        X.col_axpy(i, eta * (cw - ca), w)
        if Vd is not None:
            w -= eta * corr
        nrm = float(np.linalg.norm(w))
        if not np.isfinite(nrm) or nrm <= 0.0:
            raise DegenerateIterateError(f"iterate norm became {nrm!r}")
        w /= nrm
    return w


def _epoch_block_naive(X, anchor_cols, eta, idxs):
    """One epoch on a d-by-k block; columns update jointly, then re-orthonormalize."""
    U = covariance_apply(X, anchor_cols)
    W = anchor_cols.copy()
    if eta == 0.0:
        return W
    for i in idxs:
        pw = X.col_dot(i, W)
        pa = X.col_dot(i, anchor_cols)
        W += eta * U
        X.col_axpy(i, eta * (pw - pa), W)
        W = orthonormalize_columns(W)
    return W


def _epoch_k1_fast(X, anchor_vec, eta, idxs):
    """One epoch through the amortized O(nnz)-per-step representation."""
    state = epoch_init(X, anchor_vec, eta)
    for i in idxs:
        fast_update(state, X, int(i))
        fast_normalize(state)
    return materialize(state)


def vrpca_epoch(
    X: DataMatrix,
    anchor: Basis,
    cfg: SolverConfig,
    rng: np.random.Generator,
    deflation: DeflationPairs = (),
) -> Basis:
    """Run one variance-reduced epoch from ``anchor`` and return the new iterate.

    Computes the anchor gradient once, then performs ``cfg.epoch_len_m``
    stochastic steps (consuming exactly that many index draws from
    ``rng``), renormalizing after each: plain normalization for a single
    vector, Gram-Schmidt for a block.
    """
    if anchor.dim_d != X.dim_d:
        raise ValueError(f"anchor has d={anchor.dim_d}, data has d={X.dim_d}")
    if deflation and anchor.rank_k != 1:
        raise ValueError("deflation is defined for single-vector solves only")
    idxs = _draw_indices(rng, X.count_n, cfg.epoch_len_m)
    if anchor.rank_k == 1:
        return Basis(_epoch_k1_naive(X, anchor.vector, cfg.step_eta, idxs, list(deflation)))
    return Basis(_epoch_block_naive(X, anchor.columns, cfg.step_eta, idxs))


def _decide_fast(fast, X, cfg, deflation):
    if fast is None:
        return (
            X.is_sparse
            and cfg.rank_k == 1
            and not deflation
            and not X.has_zero_rows()
        )
    if fast:
        if cfg.rank_k != 1:
            raise ValueError("the amortized epoch supports rank_k == 1 only")
        if deflation:
            raise ValueError("the amortized epoch does not support deflation")
    return bool(fast)


def vrpca_solve(
    X: DataMatrix,
    cfg: SolverConfig,
    init: Basis,
    observer: Optional[Observer] = None,
    oracle: Optional[OracleResult] = None,
    deflation: DeflationPairs = (),
    fast: Optional[bool] = None,
) -> tuple[Basis, ConvergenceTrace]:
    """Run ``cfg.epochs_T`` variance-reduced epochs from ``init``.

    The observer is invoked after each epoch with (epoch_index, iterate)
    and must not mutate solver state. ``fast=None`` picks the amortized
    per-step path automatically for sparse single-vector problems;
    ``fast=True``/``False`` forces the choice. Each epoch is accounted as
    1 + m/n effective passes.
    """
    _check_init(X, cfg, init)
    deflation = list(deflation)
    if deflation and cfg.rank_k != 1:
        raise ValueError("deflation is defined for single-vector solves only")
    use_fast = _decide_fast(fast, X, cfg, deflation)

    rng = np.random.default_rng(cfg.seed)
    pass_per_epoch = 1.0 + cfg.epoch_len_m / X.count_n
    records: list[TraceRecord] = []
    t0 = time.perf_counter()

    anchor = init
    for s in range(1, cfg.epochs_T + 1):
        if use_fast:
            idxs = _draw_indices(rng, X.count_n, cfg.epoch_len_m)
            anchor = Basis(_epoch_k1_fast(X, anchor.vector, cfg.step_eta, idxs))
        else:
            anchor = vrpca_epoch(X, anchor, cfg, rng, deflation)
        sub, align, obj = _evaluate(X, anchor, oracle, deflation)
        records.append(
            TraceRecord(s, s * pass_per_epoch, sub, align,
                        (time.perf_counter() - t0) * 1e3, obj)
        )
        if observer is not None:
            observer(s, anchor)

    trace = ConvergenceTrace(
        records, cfg, _metric_reference(X, oracle, cfg.rank_k, len(deflation))
    )
    return anchor, trace


# -- baselines ----------------------------------------------------------------


def oja_solve(
    X: DataMatrix,
    cfg: SolverConfig,
    init: Basis,
    observer: Optional[Observer] = None,
    oracle: Optional[OracleResult] = None,
    deflation: DeflationPairs = (),
) -> tuple[Basis, ConvergenceTrace]:
    """Decaying-step stochastic iteration: w += (c/t) x (x . w), renormalize.

    ``cfg.epochs_T`` counts effective data passes (n iterations each); a
    record is emitted per pass. The iteration counter t is global across
    passes. A step whose update is exactly zero leaves the iterate
    untouched bit-for-bit.
    """
    _check_init(X, cfg, init)
    deflation = list(deflation)
    if deflation and cfg.rank_k != 1:
        raise ValueError("deflation is defined for single-vector solves only")
    Vd, svals = _deflation_arrays(deflation)

    rng = np.random.default_rng(cfg.seed)
    n = X.count_n
    k = cfg.rank_k
    records: list[TraceRecord] = []
    t0 = time.perf_counter()

    W = init.columns.copy()
    w = W[:, 0] if k == 1 else None
    t = 0
    current = init
    for p in range(1, cfg.epochs_T + 1):
        idxs = _draw_indices(rng, n, n)
        for i in idxs:
            t += 1
            eta_t = cfg.oja_step_c / t
            if eta_t == 0.0:
                continue
            if k == 1:
                coef = eta_t * float(X.col_dot(i, w))
                if coef == 0.0 and Vd is None:
                    continue
                X.col_axpy(i, coef, w)
                if Vd is not None:
                    w -= eta_t * (Vd @ (svals * (Vd.T @ w)))
                nrm = float(np.linalg.norm(w))
                if not np.isfinite(nrm) or nrm <= 0.0:
                    raise DegenerateIterateError(f"iterate norm became {nrm!r}")
                w /= nrm
            else:
                pw = X.col_dot(i, W)
                if not np.any(pw):
                    continue
                X.col_axpy(i, eta_t * pw, W)
                W = orthonormalize_columns(W)
        current = Basis(w if k == 1 else W)
        sub, align, obj = _evaluate(X, current, oracle, deflation)
        records.append(
            TraceRecord(p, float(p), sub, align, (time.perf_counter() - t0) * 1e3, obj)
        )
        if observer is not None:
            observer(p, current)

    trace = ConvergenceTrace(records, cfg, _metric_reference(X, oracle, k, len(deflation)))
    return current, trace


def power_solve(
    X: DataMatrix,
    cfg: SolverConfig,
    init: Basis,
    observer: Optional[Observer] = None,
    oracle: Optional[OracleResult] = None,
    deflation: DeflationPairs = (),
) -> tuple[Basis, ConvergenceTrace]:
    """Deterministic power iterations: B <- orthonormalize(A B), one pass each."""
    _check_init(X, cfg, init)
    deflation = list(deflation)
    if deflation and cfg.rank_k != 1:
        raise ValueError("deflation is defined for single-vector solves only")
    Vd, svals = _deflation_arrays(deflation)

    records: list[TraceRecord] = []
    t0 = time.perf_counter()
    B = init
    for r in range(1, cfg.power_iters + 1):
        M = covariance_apply(X, B.columns)
        if Vd is not None:
            M -= Vd @ (svals[:, None] * (Vd.T @ B.columns))
        B = Basis(orthonormalize_columns(M))
        sub, align, obj = _evaluate(X, B, oracle, deflation)
        records.append(
            TraceRecord(r, float(r), sub, align, (time.perf_counter() - t0) * 1e3, obj)
        )
        if observer is not None:
            observer(r, B)

    trace = ConvergenceTrace(
        records, cfg, _metric_reference(X, oracle, cfg.rank_k, len(deflation))
    )
    return B, trace


def hybrid_solve(
    X: DataMatrix,
    cfg: SolverConfig,
    init: Basis,
    observer: Optional[Observer] = None,
    oracle: Optional[OracleResult] = None,
    deflation: DeflationPairs = (),
) -> tuple[Basis, ConvergenceTrace]:
    """One decaying-step warm-start pass, then the variance-reduced solver.

    Each phase re-seeds its generator from ``cfg.seed`` and the decaying
    step restarts at t = 1, so ``oja_step_c = 0`` reduces exactly to
    ``vrpca_solve`` from ``init`` and ``epochs_T = 0`` reduces exactly to
    one pass of ``oja_solve``. Pass accounting is continuous: the
    warm-start pass costs 1, epochs continue from there.
    """
    _check_init(X, cfg, init)
    t0 = time.perf_counter()

    warm_cfg = replace(cfg, epochs_T=1)
    warm, warm_trace = oja_solve(X, warm_cfg, init, oracle=oracle, deflation=deflation)
    records = list(warm_trace.records)
    if observer is not None:
        observer(1, warm)

    shifted = None
    if observer is not None:
        shifted = lambda s, b: observer(s + 1, b)  # noqa: E731
    final, vr_trace = vrpca_solve(
        X, cfg, warm, observer=shifted, oracle=oracle, deflation=deflation
    )
    offset = (time.perf_counter() - t0) * 1e3 - (
        vr_trace.records[-1].wall_millis if vr_trace.records else 0.0
    )
    for rec in vr_trace.records:
        records.append(
            TraceRecord(
                rec.epoch_index + 1,
                rec.effective_passes + 1.0,
                rec.log10_suboptimality,
                rec.alignment_sq,
                rec.wall_millis + offset,
                rec.objective,
            )
        )

    trace = ConvergenceTrace(
        records,
        cfg,
        _metric_reference(X, oracle, cfg.rank_k, len(deflation)),
        warnings=warm_trace.warnings + vr_trace.warnings,
    )
    return final, trace


# -- deflation driver ----------------------------------------------------------

_SOLVER_BY_NAME = {
    "vrpca": vrpca_solve,
    "oja": oja_solve,
    "power": power_solve,
    "hybrid": hybrid_solve,
}


def deflation_solve(
    X: DataMatrix,
    cfg: SolverConfig,
    k: int,
    inner: str = "vrpca",
    oracle: Optional[OracleResult] = None,
    observer: Optional[Callable[[int, int, Basis], None]] = None,
) -> tuple[list[tuple[float, np.ndarray]], list[ConvergenceTrace]]:
    """Recover the top k eigenpairs one-by-one by deflating found components.

    Each level runs the selected single-vector solver with every
    rank-one product deflated by the pairs found so far, then takes the
    Rayleigh quotient of the result as its eigenvalue (which is also the
    deflation weight for later levels). Returns the pairs in
    non-increasing eigenvalue order together with the per-level traces.

    Convergence at a level is only guaranteed when the eigengap below it
    is positive; a level whose final iterate is still moving gets a
    warning appended to its trace rather than an error. The optional
    observer receives (level, epoch_index, iterate).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if inner not in _SOLVER_BY_NAME:
        raise ValueError(f"unknown inner solver {inner!r}")
    solver_fn = _SOLVER_BY_NAME[inner]
    seeds = np.random.SeedSequence(cfg.seed).generate_state(2 * k, dtype=np.uint64)

    pairs: list[tuple[float, np.ndarray]] = []
    traces: list[ConvergenceTrace] = []
    for level in range(k):
        init_rng = np.random.default_rng(int(seeds[2 * level]))
        init = Basis.random(X.dim_d, 1, init_rng)
        lvl_cfg = replace(cfg, rank_k=1, seed=int(seeds[2 * level + 1]))

        iterates: list[np.ndarray] = []

        def _obs(epoch_index, basis, _level=level):
            iterates.append(basis.vector)
            if observer is not None:
                observer(_level, epoch_index, basis)

        basis, trace = solver_fn(
            X, lvl_cfg, init, observer=_obs, oracle=oracle, deflation=pairs
        )
        if len(iterates) >= 2:
            drift = 1.0 - float(iterates[-1] @ iterates[-2]) ** 2
            if drift > _CONVERGENCE_DRIFT_TOL:
                trace.warnings.append(
                    f"level {level}: iterate still moving between final epochs "
                    f"(1 - cos^2 = {drift:.2e}); the eigengap at this level may vanish"
                )
        v = basis.vector.copy()
        s = float(v @ covariance_apply(X, v))
        pairs.append((s, v))
        traces.append(trace)

    pairs.sort(key=lambda sv: -sv[0])
    return pairs, traces


# -- parameter planners ---------------------------------------------------------

DEFAULT_THEORY_CONSTANTS = (0.05, 48.0, 0.75)


@dataclass(frozen=True)
class TheoryParams:
    """A (step, epoch length, epoch count) triple from the sufficient conditions."""

    step_eta: float
    epoch_len_m: int
    epochs_T: int
    satisfied: bool


def _check_planner_domain(sq_norm_bound, eigengap, delta=0.5, epsilon=0.5):
    if not sq_norm_bound > 0:
        raise ValueError("sq_norm_bound must be positive")
    if not eigengap > 0:
        raise ValueError("eigengap must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")


def theory_satisfied(
    sq_norm_bound: float,
    eigengap: float,
    delta: float,
    step_eta: float,
    epoch_len_m: int,
    constants: tuple[float, float, float] = DEFAULT_THEORY_CONSTANTS,
) -> bool:
    """Check an arbitrary (eta, m) against the three sufficient conditions."""
    _check_planner_domain(sq_norm_bound, eigengap, delta)
    if not step_eta > 0 or epoch_len_m < 1:
        return False
    c1, c2, c3 = constants
    r = sq_norm_bound
    log_term = math.log(2.0 / delta)
    ok_eta = step_eta <= c1 * delta * delta * eigengap / (r * r)
    ok_m = epoch_len_m >= c2 * log_term / (step_eta * eigengap)
    msq = epoch_len_m * step_eta * step_eta
    ok_noise = msq * r * r + r * math.sqrt(msq * log_term) <= c3
    return ok_eta and ok_m and ok_noise


def theory_params(
    sq_norm_bound: float,
    eigengap: float,
    delta: float,
    epsilon: float,
    constants: tuple[float, float, float] = DEFAULT_THEORY_CONSTANTS,
) -> TheoryParams:
    """Plan (eta, m, T) from the sufficient convergence conditions.

    eta = c1 delta^2 gap / r^2, m = ceil(c2 log(2/delta) / (eta gap)),
    T = ceil(log(1/eps) / log(2/delta)); ``satisfied`` reports whether the
    planned pair also meets the accumulated-noise condition
    m eta^2 r^2 + r sqrt(m eta^2 log(2/delta)) <= c3. The default
    constants are conservative picks, exposed for tuning; they are not
    uniquely determined by the analysis.
    """
    _check_planner_domain(sq_norm_bound, eigengap, delta, epsilon)
    c1, c2, _ = constants
    r = sq_norm_bound
    eta = c1 * delta * delta * eigengap / (r * r)
    m = math.ceil(c2 * math.log(2.0 / delta) / (eta * eigengap))
    T = math.ceil(math.log(1.0 / epsilon) / math.log(2.0 / delta))
    ok = theory_satisfied(r, eigengap, delta, eta, m, constants)
    return TheoryParams(step_eta=eta, epoch_len_m=m, epochs_T=T, satisfied=ok)


def heuristic_params(X: DataMatrix) -> tuple[float, int]:
    """The data-driven default: m = n and eta = 1 / (mean_sq_norm * sqrt(n)).

    Makes the anchor-gradient and stochastic halves of an epoch cost the
    same, and scales the step so eta * ||x||^2 is about 1/sqrt(n); needs
    no knowledge of the eigengap. Raises on an all-zero matrix.
    """
    rbar = X.avg_sq_norm
    if rbar <= 0.0:
        raise ValueError("cannot derive a step size for an all-zero matrix")
    return 1.0 / (rbar * math.sqrt(X.count_n)), X.count_n
