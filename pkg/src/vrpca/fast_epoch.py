"""Amortized inner-loop representation: one stochastic update in O(nnz).

A naive implementation of the variance-reduced inner loop costs O(d) per
iteration because of the dense anchor-gradient addition and the
renormalization. Here the iterate is never stored explicitly; it is kept
as

    w = alpha * g + beta * u_tilde

together with three cached scalars

    gamma = ||alpha g||^2,  delta = <alpha g, u_tilde>,  zeta = ||u_tilde||^2,

so that ||w||^2 = gamma + 2 beta delta + beta^2 zeta is available in
O(1). One stochastic update then only touches the sampled column's
support within g (plus O(1) scalar work), and normalization is a scalar
rescale of (alpha, beta). The represented iterate stays numerically
equivalent to the naive path to ~1e-12 over a full epoch.

Scalar-cache bookkeeping per update, for w_new = w + Delta_g + eta * u_tilde
with Delta_g = coef * x supported on x's nonzeros:

    g     += Delta_g / alpha          (so alpha * g absorbs Delta_g)
    beta  += eta
    gamma += 2 * alpha * <g_old, Delta_g> + ||Delta_g||^2
    delta += <Delta_g, u_tilde>

The gamma update must use the inner product against g *before* the
in-place addition: ||alpha g_new||^2 = ||alpha g_old||^2
+ 2 alpha <g_old, Delta_g> + ||Delta_g||^2 is an algebraic identity,
whereas the post-update inner product double-counts ||Delta_g||^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import DataMatrix, covariance_apply

__all__ = [
    "EpochState",
    "DegenerateIterateError",
    "epoch_init",
    "fast_update",
    "fast_normalize",
    "materialize",
    "rebase",
    "recompute_scalars",
]

# Rebase when |log10 alpha| exceeds this, long before under/overflow.
ALPHA_LOG10_GUARD = 100.0
# Every REFRESH_INTERVAL updates, recompute the scalar caches (O(d)) and
# rebase if relative drift exceeds DRIFT_TOL. Amortized cost is negligible.
REFRESH_INTERVAL = 1024
DRIFT_TOL = 1e-10


class DegenerateIterateError(ArithmeticError):
    """The represented iterate collapsed to (numerically) zero."""


@dataclass
class EpochState:
    """Mutable state of one amortized epoch; owned by a single solver run.

    ``entries_touched`` counts vector entries written by updates and
    ``updates`` the number of stochastic steps, so tests can assert the
    amortized cost bound directly.
    """

    g: np.ndarray
    u_tilde: np.ndarray
    w_anchor: np.ndarray
    alpha: float
    beta: float
    gamma: float
    delta: float
    zeta: float
    step_eta: float
    updates: int = 0
    entries_touched: int = 0
    _since_refresh: int = field(default=0, repr=False)

    def represented_sqnorm(self) -> float:
        """||alpha g + beta u_tilde||^2 from the cached scalars.

        Expanding the square gives gamma + 2 beta delta + beta^2 zeta;
        the beta factors appear because delta and zeta are cached
        unscaled (they only change on rescale/rebase, never per step).
        """
        return self.gamma + 2.0 * self.beta * self.delta + self.beta * self.beta * self.zeta


def epoch_init(X: DataMatrix, anchor: np.ndarray, step_eta: float) -> EpochState:
    """Open an epoch anchored at the unit vector ``anchor``.

    Computes the full anchor gradient u_tilde = A anchor once (the O(nnz)
    part of the epoch), and seeds the representation with g = anchor,
    alpha = 1, beta = 0, so the represented iterate equals the anchor
    exactly.
    """
    anchor = np.array(anchor, dtype=np.float64)
    if anchor.ndim != 1 or anchor.shape[0] != X.dim_d:
        raise ValueError(f"anchor shape {anchor.shape} incompatible with d={X.dim_d}")
    nrm = float(np.linalg.norm(anchor))
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"anchor must be unit-norm, got ||anchor|| = {nrm!r}")
    if step_eta < 0:
        raise ValueError("step_eta must be non-negative")
    if X.is_sparse and X.has_zero_rows():
        # The O(nnz)-per-update accounting assumes d <= avg_nnz * n, which
        # fails when all-zero rows are present; they carry no signal, so
        # the loader is expected to drop them up front.
        raise ValueError(
            "sparse data matrix has all-zero rows; drop them at load time "
            "(load_sparse_text(..., drop_zero_rows=True)) before using the fast epoch"
        )
    u = covariance_apply(X, anchor)
    return EpochState(
        g=anchor.copy(),
        u_tilde=u,
        w_anchor=anchor,
        alpha=1.0,
        beta=0.0,
        gamma=float(anchor @ anchor),
        delta=float(anchor @ u),
        zeta=float(u @ u),
        step_eta=float(step_eta),
    )


def recompute_scalars(state: EpochState) -> tuple[float, float, float]:
    """(gamma, delta, zeta) recomputed from the vectors, for drift checks."""
    ag = state.alpha * state.g
    return float(ag @ ag), float(ag @ state.u_tilde), float(state.u_tilde @ state.u_tilde)


def rebase(state: EpochState) -> EpochState:
    """Fold (alpha, beta) into g and recompute the scalar caches.

    O(d); invoked when alpha drifts toward under/overflow or the caches
    accumulate rounding error. Leaves the represented iterate unchanged.
    """
    state.g = state.alpha * state.g + state.beta * state.u_tilde
    state.alpha = 1.0
    state.beta = 0.0
    state.gamma = float(state.g @ state.g)
    state.delta = float(state.g @ state.u_tilde)
    state._since_refresh = 0
    return state


def _maybe_refresh(state: EpochState) -> None:
    if abs(state.alpha) == 0.0 or abs(np.log10(abs(state.alpha))) > ALPHA_LOG10_GUARD:
        rebase(state)
        return
    if state._since_refresh >= REFRESH_INTERVAL:
        gamma, delta, _ = recompute_scalars(state)
        scale = max(abs(gamma), abs(delta), 1e-300)
        if max(abs(gamma - state.gamma), abs(delta - state.delta)) > DRIFT_TOL * scale:
            rebase(state)
        else:
            state._since_refresh = 0


def fast_update(state: EpochState, X: DataMatrix, index: int) -> EpochState:
    """One stochastic step on the sampled column, in O(nnz(x)) time.

    Applies w' = w + eta * (x (x.w - x.w_anchor) + u_tilde) to the
    representation: the u_tilde part rides on beta, the sparse part on g.
    """
    _maybe_refresh(state)
    eta = state.step_eta

    xg = float(X.col_dot(index, state.g))
    xu = float(X.col_dot(index, state.u_tilde))
    xa = float(X.col_dot(index, state.w_anchor))
    xw = state.alpha * xg + state.beta * xu
    coef = eta * (xw - xa)

    # Scalar capture against the pre-update g (see module docstring).
    p = coef * xg
    q = coef * xu
    dg_sq = coef * coef * X.col_sqnorm(index)

    if coef != 0.0:
        X.col_axpy(index, coef / state.alpha, state.g)
    state.beta += eta
    state.gamma += 2.0 * state.alpha * p + dg_sq
    state.delta += q

    state.updates += 1
    state.entries_touched += X.col_nnz(index)
    state._since_refresh += 1
    return state


def fast_normalize(state: EpochState) -> EpochState:
    """Rescale the representation to unit norm in O(1)."""
    sq = state.represented_sqnorm()
    if not np.isfinite(sq) or sq <= 0.0:
        raise DegenerateIterateError(
            f"represented squared norm is {sq!r}; iterate degenerated"
        )
    nu = float(np.sqrt(sq))
    state.alpha /= nu
    state.beta /= nu
    state.gamma /= nu * nu
    state.delta /= nu
    return state


def materialize(state: EpochState) -> np.ndarray:
    """The represented iterate alpha g + beta u_tilde as a dense (d,) array."""
    if state.alpha == 1.0 and state.beta == 0.0:
        return state.g.copy()
    return state.alpha * state.g + state.beta * state.u_tilde
