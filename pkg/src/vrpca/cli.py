"""Benchmark command line: dataset generation, solver runs, comparison sweeps.

Three subcommands:

* ``generate`` -- write a controlled-spectrum synthetic dataset;
* ``solve``    -- run one solver on a dataset and export its trace CSV;
* ``compare``  -- run every solver from one shared init under a common
  effective-pass budget and export per-solver traces plus a summary.

Every emitted trace file gets a JSON manifest sidecar carrying the exact
command, seed, config, and dataset fingerprint that produced it. Trace
CSVs have a fixed header and locale-independent formatting; with the
determinism flag on (the default) the wall-time column is written as 0
so re-running an identical command reproduces the file byte-for-byte
(measured wall time still goes to the manifest).

Exit codes: 0 success, 1 usage, 2 I/O or file-format trouble,
3 numerical failure (rank deficiency / degenerate iterate).

The comparison sweep runs entries on a thread pool sized by the
``VRPCA_THREADS`` environment variable (default 1); outputs do not
depend on the pool size.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .dataio import (
    FORMATS,
    DatasetFormatError,
    file_sha256,
    load_dataset,
    save_dataset,
)
from .fast_epoch import DegenerateIterateError
from .linalg import Basis, RankDeficiencyError
from .metrics import DESK_DIM_LIMIT, log_suboptimality, oracle_compute
from .solvers import (
    SolverConfig,
    deflation_solve,
    heuristic_params,
    hybrid_solve,
    oja_solve,
    power_solve,
    theory_params,
    vrpca_solve,
)
from .synthetic import SpectrumSpec, synth_generate

__all__ = ["main", "run"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3

SOLVERS = {
    "vrpca": vrpca_solve,
    "oja": oja_solve,
    "power": power_solve,
    "hybrid": hybrid_solve,
}

SUMMARY_THRESHOLDS = (-3.0, -6.0, -9.0)


class UsageError(Exception):
    """Invalid flags or flag combinations; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x) -> str:
    # repr of a Python float: shortest round-trip form, never localized.
    return repr(float(x))


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _init_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _child_seeds(seed: int, count: int) -> list[int]:
    state = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [int(s) for s in state]


# -- trace / manifest output -----------------------------------------------------


def _write_trace_csv(path, trace, denominator=None) -> None:
    """Write one trace; ``denominator`` supplies the objective reference
    when the run had no oracle (the alignment column is then omitted)."""
    with_alignment = denominator is None
    header = ["epoch", "effective_passes", "log10_subopt"]
    if with_alignment:
        header.append("alignment_sq")
    header.append("wall_ms")
    lines = [",".join(header)]
    zero_wall = trace.config_echo.determinism
    for rec in trace.records:
        sub = rec.log10_suboptimality
        if sub is None:
            sub = log_suboptimality(rec.objective, denominator)
        row = [str(rec.epoch_index), _fmt(rec.effective_passes), _fmt(sub)]
        if with_alignment:
            row.append(_fmt(rec.alignment_sq))
        row.append(_fmt(0.0 if zero_wall else rec.wall_millis))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _write_manifest(trace_path, payload: dict) -> Path:
    man_path = Path(str(trace_path) + ".manifest.json")
    man_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n",
        encoding="ascii",
    )
    return man_path


def _oracle_summary(oracle, top=6):
    if oracle is None:
        return None
    return [float(v) for v in oracle.eigenvalues[:top]]


# -- generate -----------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.tail_seed is None or args.matrix_seed is None:
        derived = _child_seeds(args.seed, 2)
        tail_seed = args.tail_seed if args.tail_seed is not None else derived[0]
        matrix_seed = args.matrix_seed if args.matrix_seed is not None else derived[1]
    else:
        tail_seed, matrix_seed = args.tail_seed, args.matrix_seed
    try:
        spec = SpectrumSpec(
            dim_d=args.d,
            count_n=args.n,
            gap_lambda=args.gap_lambda,
            tail_seed=tail_seed,
            matrix_seed=matrix_seed,
        )
        X = synth_generate(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    t0 = time.perf_counter()
    save_dataset(X, args.out, args.format)
    fingerprint = file_sha256(args.out)
    oracle = oracle_compute(X, min(6, X.dim_d)) if X.dim_d <= DESK_DIM_LIMIT else None
    manifest = {
        "command": ["generate"] + _echo_flags(args),
        "spectrum": asdict(spec),
        "dataset_sha256": fingerprint,
        "format": args.format,
        "oracle_top_eigenvalues": _oracle_summary(oracle),
        "outputs": [str(args.out)],
        "created_utc": _utc_now(),
        "wall_seconds": time.perf_counter() - t0,
    }
    _write_manifest(args.out, manifest)
    print(f"wrote {args.out} (d={X.dim_d}, n={X.count_n}, sha256 {fingerprint[:16]}...)")
    return EXIT_OK


# -- solve ---------------------------------------------------------------------


def _resolve_params(args, X, oracle):
    """(step_eta, epoch_len_m, epochs_T) for the requested parameter mode."""
    epochs = args.epochs
    if args.params == "heuristic":
        eta, m = heuristic_params(X)
    elif args.params == "manual":
        if args.eta is None or args.m is None:
            raise UsageError("--params manual requires both --eta and --m")
        eta, m = args.eta, args.m
    else:  # theory
        if args.delta is None or args.epsilon is None:
            raise UsageError("--params theory requires --delta and --epsilon")
        if args.gap_lambda is not None:
            gap = args.gap_lambda
        elif oracle is not None and oracle.eigenvalues.size >= 2:
            gap = float(oracle.eigenvalues[0] - oracle.eigenvalues[1])
        else:
            raise UsageError(
                "--params theory needs --lambda when no oracle is available"
            )
        try:
            plan = theory_params(X.max_sq_norm, gap, args.delta, args.epsilon)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if not plan.satisfied:
            raise UsageError(
                "theory parameters are unsatisfiable for this dataset: "
                f"eta={plan.step_eta:.3e}, m={plan.epoch_len_m} violate the "
                "accumulated-noise condition; relax delta/epsilon or use "
                "--params heuristic"
            )
        eta, m = plan.step_eta, plan.epoch_len_m
        if args.epochs_given is False:
            epochs = plan.epochs_T
    if eta is not None and eta <= 0:
        raise UsageError("step size must be positive")
    if m < 1:
        raise UsageError("epoch length must be at least 1")
    return eta, m, epochs


def _build_config(args, X, oracle) -> SolverConfig:
    eta, m, epochs = _resolve_params(args, X, oracle)
    if epochs < 1:
        raise UsageError("--epochs must be at least 1")
    oja_c = args.oja_c if args.oja_c is not None else 1.0 / X.avg_sq_norm
    try:
        return SolverConfig(
            step_eta=eta,
            epoch_len_m=m,
            epochs_T=epochs,
            seed=args.seed,
            rank_k=args.k,
            oja_step_c=oja_c,
            power_iters=epochs,
            determinism=args.determinism,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_for_run(args):
    X, kept_rows = load_dataset(args.input, drop_zero_rows=args.drop_zero_rows)
    oracle = None
    oracle_rank = args.deflate if getattr(args, "deflate", 0) else args.k
    if not args.no_oracle and X.dim_d <= DESK_DIM_LIMIT:
        oracle = oracle_compute(X, oracle_rank)
    elif not args.no_oracle:
        print(
            f"note: d={X.dim_d} is beyond the dense-oracle guard; "
            "running without oracle metrics",
            file=sys.stderr,
        )
    return X, kept_rows, oracle


def _best_observed(traces) -> float:
    return max(rec.objective for tr in traces for rec in tr.records)


def cmd_solve(args) -> int:
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    if args.deflate and args.k != 1:
        raise UsageError("--deflate recovers vectors one-by-one; use --k 1")
    X, kept_rows, oracle = _load_for_run(args)
    fingerprint = file_sha256(args.input)
    cfg = _build_config(args, X, oracle)
    init = Basis.random(X.dim_d, args.k, _init_rng(args.seed, 0))

    t0 = time.perf_counter()
    outputs = []
    manifest = {
        "command": ["solve"] + _echo_flags(args),
        "dataset_path": str(args.input),
        "dataset_sha256": fingerprint,
        "solver": args.solver,
        "params_mode": args.params,
        "config": asdict(cfg),
        "oracle_top_eigenvalues": _oracle_summary(oracle),
        "suboptimality_denominator": "oracle" if oracle is not None else "best-observed",
        "created_utc": _utc_now(),
    }
    if kept_rows is not None:
        manifest["kept_rows"] = int(kept_rows.size)

    if args.deflate:
        pairs, traces = deflation_solve(
            X, cfg, args.deflate, inner=args.solver, oracle=oracle
        )
        denom = None if oracle is not None else _best_observed(traces)
        stem = Path(args.trace_out)
        for level, trace in enumerate(traces, start=1):
            path = stem.with_name(f"{stem.stem}_level{level}{stem.suffix}")
            _write_trace_csv(path, trace, denominator=denom)
            outputs.append(str(path))
            for warning in trace.warnings:
                print(f"warning: {warning}", file=sys.stderr)
        manifest["eigenvalues"] = [s for s, _ in pairs]
        print("recovered eigenvalues:", " ".join(f"{s:.6e}" for s, _ in pairs))
    else:
        basis, trace = SOLVERS[args.solver](X, cfg, init, oracle=oracle)
        denom = None if oracle is not None else _best_observed([trace])
        _write_trace_csv(args.trace_out, trace, denominator=denom)
        outputs.append(str(args.trace_out))
        final = trace.final()
        sub = final.log10_suboptimality
        if sub is None:
            sub = log_suboptimality(final.objective, denom)
        line = f"{args.solver}: passes={final.effective_passes:g} log10_subopt={sub:.3f}"
        if final.alignment_sq is not None:
            line += f" alignment_sq={final.alignment_sq:.12f}"
        print(line)

    manifest["outputs"] = outputs
    manifest["wall_seconds"] = time.perf_counter() - t0
    for path in outputs:
        _write_manifest(path, manifest)
    return EXIT_OK


# -- compare -------------------------------------------------------------------


def _compare_entries(args, X, oracle, init):
    """(name, param_string, callable) for every solver in the sweep."""
    n = X.count_n
    eta, m = heuristic_params(X)
    budget = args.budget_passes
    pass_per_epoch = 1.0 + m / n
    vr_epochs = max(int(budget // pass_per_epoch), 1)
    hy_epochs = int((budget - 1) // pass_per_epoch)
    rbar = X.avg_sq_norm
    grid = [float(tok) for tok in args.oja_grid.split(",") if tok.strip()]
    if not grid:
        raise UsageError("--oja-grid must list at least one multiplier")

    seeds = _child_seeds(args.seed, 3 + len(grid))
    entries = []

    def _make(solver_fn, cfg):
        return lambda: solver_fn(X, cfg, init, oracle=oracle)

    cfg_v = SolverConfig(
        step_eta=eta, epoch_len_m=m, epochs_T=vr_epochs, seed=seeds[0],
        rank_k=args.k, determinism=args.determinism,
    )
    entries.append(("vrpca", f"eta={eta:.6g};m={m};epochs={vr_epochs}",
                    _make(vrpca_solve, cfg_v)))

    cfg_p = SolverConfig(
        step_eta=eta, epoch_len_m=m, epochs_T=1, seed=seeds[1], rank_k=args.k,
        power_iters=budget, determinism=args.determinism,
    )
    entries.append(("power", f"rounds={budget}", _make(power_solve, cfg_p)))

    for i, mult in enumerate(grid):
        c = mult / rbar
        cfg_o = SolverConfig(
            step_eta=eta, epoch_len_m=m, epochs_T=budget, seed=seeds[3 + i],
            rank_k=args.k, oja_step_c=c, determinism=args.determinism,
        )
        entries.append(
            (f"oja_c{mult:g}", f"c={c:.6g};grid={mult:g}/rbar", _make(oja_solve, cfg_o))
        )

    cfg_h = SolverConfig(
        step_eta=eta, epoch_len_m=m, epochs_T=hy_epochs, seed=seeds[2],
        rank_k=args.k, oja_step_c=1.0 / rbar, determinism=args.determinism,
    )
    entries.append(
        ("hybrid", f"oja_pass+eta={eta:.6g};m={m};epochs={hy_epochs}",
         _make(hybrid_solve, cfg_h))
    )
    return entries


def _passes_to(records, threshold, denominator):
    for rec in records:
        sub = rec.log10_suboptimality
        if sub is None:
            sub = log_suboptimality(rec.objective, denominator)
        if sub <= threshold:
            return rec.effective_passes
    return None


def cmd_compare(args) -> int:
    if args.budget_passes < 2:
        raise UsageError("--budget-passes must be at least 2")
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    args.deflate = 0
    X, _, oracle = _load_for_run(args)
    fingerprint = file_sha256(args.input)
    init = Basis.random(X.dim_d, args.k, _init_rng(args.seed, 0))
    init_alignment = None
    if oracle is not None:
        from .metrics import alignment

        init_alignment = alignment(init, oracle)

    entries = _compare_entries(args, X, oracle, init)
    workers = max(int(os.environ.get("VRPCA_THREADS", "1")), 1)
    t0 = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda e: e[2](), entries))
    else:
        results = [entry[2]() for entry in entries]
    wall = time.perf_counter() - t0

    traces = [trace for _, trace in results]
    denom = None if oracle is not None else _best_observed(traces)

    prefix = args.out_prefix
    summary_rows = []
    common = {
        "command": ["compare"] + _echo_flags(args),
        "dataset_path": str(args.input),
        "dataset_sha256": fingerprint,
        "oracle_top_eigenvalues": _oracle_summary(oracle),
        "init_alignment_sq": init_alignment,
        "suboptimality_denominator": "oracle" if oracle is not None else "best-observed",
        "created_utc": _utc_now(),
        "wall_seconds": wall,
    }
    for (name, params, _), (_, trace) in zip(entries, results):
        path = f"{prefix}_{name}.csv"
        _write_trace_csv(path, trace, denominator=denom)
        manifest = dict(common)
        manifest.update(
            {"solver": name, "param_string": params, "config": asdict(trace.config_echo),
             "outputs": [path]}
        )
        _write_manifest(path, manifest)
        final = trace.final()
        sub = final.log10_suboptimality
        if sub is None:
            sub = log_suboptimality(final.objective, denom)
        row = [name, params, _fmt(sub)]
        for threshold in SUMMARY_THRESHOLDS:
            reached = _passes_to(trace.records, threshold, denom)
            row.append("" if reached is None else _fmt(reached))
        summary_rows.append(row)

    summary_path = f"{prefix}_summary.csv"
    header = "solver,param_string,final_log10_subopt,passes_to_m3,passes_to_m6,passes_to_m9"
    Path(summary_path).write_text(
        "\n".join([header] + [",".join(row) for row in summary_rows]) + "\n",
        encoding="ascii",
    )
    _write_manifest(summary_path, dict(common, outputs=[summary_path]))

    width = max(len(r[0]) for r in summary_rows)
    print(f"{'solver':<{width}}  final_log10_subopt")
    for row in summary_rows:
        print(f"{row[0]:<{width}}  {float(row[2]):+.3f}")
    print(f"traces written with prefix {prefix}_")
    return EXIT_OK


# -- argument plumbing ------------------------------------------------------------


def _echo_flags(args) -> list[str]:
    skip = {"func", "command", "epochs_given"}
    out = []
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None:
            continue
        out.append(f"--{key.replace('_', '-')}={value}")
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vrpca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a synthetic dataset")
    gen.add_argument("--d", type=int, required=True, help="ambient dimension (>= 6)")
    gen.add_argument("--n", type=int, required=True, help="number of columns (>= d)")
    gen.add_argument("--lambda", dest="gap_lambda", type=float, required=True,
                     help="singular-value gap, in (0, 0.5)")
    gen.add_argument("--seed", type=int, default=0,
                     help="base seed; tail/matrix seeds derive from it")
    gen.add_argument("--tail-seed", type=int, default=None)
    gen.add_argument("--matrix-seed", type=int, default=None)
    gen.add_argument("--out", required=True)
    gen.add_argument("--format", choices=FORMATS, default="vrpd")
    gen.set_defaults(func=cmd_generate)

    slv = sub.add_parser("solve", help="run one solver and export its trace")
    slv.add_argument("--in", dest="input", required=True)
    slv.add_argument("--solver", choices=sorted(SOLVERS), default="vrpca")
    slv.add_argument("--k", type=int, default=1)
    slv.add_argument("--eta", type=float, default=None)
    slv.add_argument("--m", type=int, default=None)
    slv.add_argument("--epochs", type=int, default=None,
                     help="epochs / passes / power rounds (default 10)")
    slv.add_argument("--oja-c", type=float, default=None,
                     help="decaying-step numerator c in c/t (default 1/mean_sq_norm)")
    slv.add_argument("--seed", type=int, default=0)
    slv.add_argument("--params", choices=("heuristic", "theory", "manual"),
                     default="heuristic")
    slv.add_argument("--delta", type=float, default=None)
    slv.add_argument("--epsilon", type=float, default=None)
    slv.add_argument("--lambda", dest="gap_lambda", type=float, default=None,
                     help="covariance eigengap for --params theory")
    slv.add_argument("--deflate", type=int, default=0,
                     help="recover this many eigenvectors one-by-one")
    slv.add_argument("--trace-out", required=True)
    slv.add_argument("--no-oracle", action="store_true")
    slv.add_argument("--determinism", action=argparse.BooleanOptionalAction,
                     default=True)
    slv.add_argument("--drop-zero-rows", action="store_true",
                     help="drop all-zero rows from sparse input at load time")
    slv.set_defaults(func=cmd_solve)

    cmp_ = sub.add_parser("compare", help="run all solvers under one pass budget")
    cmp_.add_argument("--in", dest="input", required=True)
    cmp_.add_argument("--budget-passes", type=int, required=True)
    cmp_.add_argument("--oja-grid", default="1,10,100",
                      help="comma list of multipliers of 1/mean_sq_norm")
    cmp_.add_argument("--k", type=int, default=1)
    cmp_.add_argument("--seed", type=int, default=0)
    cmp_.add_argument("--out-prefix", required=True)
    cmp_.add_argument("--no-oracle", action="store_true")
    cmp_.add_argument("--determinism", action=argparse.BooleanOptionalAction,
                      default=True)
    cmp_.add_argument("--drop-zero-rows", action="store_true")
    cmp_.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if hasattr(args, "epochs"):
            args.epochs_given = args.epochs is not None
            if args.epochs is None:
                args.epochs = 10
            elif args.epochs < 1:
                raise UsageError("--epochs must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetFormatError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RankDeficiencyError, DegenerateIterateError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
