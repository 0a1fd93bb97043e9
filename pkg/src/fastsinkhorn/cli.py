"""Command-line front end: ``fastsinkhorn {solve1d,solve2d,compare,bench,trace}``.

Human-readable summaries go to stdout; ``--out`` receives machine CSV.

Exit codes: 0 success (converged or budget exhausted with a finite state),
1 usage or input error, 2 a non-finite scaling aborted the iteration.

CSV schemas
-----------
solve1d / solve2d ``--out``
    ``iteration,wall_time_seconds,marginal_error`` (one row per check)
solve1d / solve2d ``--plan-out``
    the dense plan, one matrix row per line, no header
compare
    ``dim,size,epsilon,iterations,fs1_seconds,naive_seconds,speedup,plan_frobenius_diff,fs1_cost,naive_cost,aborted``
bench
    ``method,size,epsilon,iterations,wall_time_seconds,marginal_error,seed,dim``
trace
    ``method,epsilon,iteration,wall_time_seconds,marginal_error,aborted``
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import bench
from .exceptions import FastSinkhornError
from .problems import (
    image_to_measure,
    load_matrix,
    normalize_signal,
    random_pair_1d,
    random_pair_2d,
    ricker_pair,
)
from .solver import exact_w1_1d, naive_solve, solve
from .types import Grid1D, Grid2D, KernelSpec, SolverConfig, TransportPlanView, validate_measure

EXIT_OK, EXIT_USAGE, EXIT_NONFINITE = 0, 1, 2

COMPARE_HEADER = ["dim", "size", "epsilon", "iterations", "fs1_seconds", "naive_seconds",
                  "speedup", "plan_frobenius_diff", "fs1_cost", "naive_cost", "aborted"]
SOLVE_TRACE_HEADER = ["iteration", "wall_time_seconds", "marginal_error"]

# dense plans beyond this many entries are not written by --plan-out
PLAN_OUT_MAX = 4_000_000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for non-finite aborts
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _solver_flags(p, multi_eps=False):
    if multi_eps:
        p.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.01, 0.001],
                       help="one or more regularization values")
    else:
        p.add_argument("--eps", type=float, default=0.01, help="entropic regularization")
    p.add_argument("--tol", type=float, default=1e-9, help="marginal-error threshold (0: fixed budget)")
    p.add_argument("--itr-max", type=int, default=10000)
    p.add_argument("--check-interval", type=int, default=1)
    p.add_argument("--stabilize", action=argparse.BooleanOptionalAction, default=False,
                   help="absorb large scalings into log potentials")
    p.add_argument("--tau", type=float, default=1e10, help="absorption threshold")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output path")


def _problem_flags(p, dim):
    p.add_argument("--u", help="source weights (csv or pgm)")
    p.add_argument("--v", help="target weights (csv or pgm)")
    p.add_argument("--normalize", action="store_true",
                   help="treat --u/--v as raw samples: square, normalize and floor by --delta")
    p.add_argument("--random", action="store_true", help="seeded uniform random pair")
    p.add_argument("--n", type=int, help="points (1D) or rows (2D)")
    p.add_argument("--delta", type=float, default=1e-3, help="density floor for normalization")
    if dim == 1:
        p.add_argument("--ricker", action="store_true", help="Ricker wavelet and its shifted copy")
        p.add_argument("--shift", type=float, default=-1.2032)
        p.add_argument("--tmin", type=float, default=-4.0)
        p.add_argument("--tmax", type=float, default=4.0)
        p.add_argument("--h", type=float, help="grid spacing (default 1, or 6/(n-1) for --random)")
    else:
        p.add_argument("--m", type=int, help="columns (defaults to --n)")
        p.add_argument("--h1", type=float, default=1.0, help="vertical spacing")
        p.add_argument("--h2", type=float, default=1.0, help="horizontal spacing")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fastsinkhorn",
                     description="Entropic Wasserstein-1 on uniform 1D/2D grids.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for dim in (1, 2):
        p = sub.add_parser(f"solve{dim}d", help=f"solve a {dim}D problem")
        _solver_flags(p)
        _problem_flags(p, dim)
        p.add_argument("--naive", action="store_true", help="use the quadratic reference solver")
        p.add_argument("--plan-out", help="write the dense plan as CSV (small problems)")
        p.set_defaults(func=cmd_solve, dim=dim)

    p = sub.add_parser("compare", help="fast vs naive: timings, speed-up, plan difference")
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    _solver_flags(p)
    _problem_flags(p, 2)
    _add_1d_only(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="fixed-budget timing sweep with log-log slope fits")
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--sizes", type=int, nargs="+",
                   help="points (1D) or points per axis (2D); default powers of two / 10..160")
    p.add_argument("--methods", nargs="+", choices=sorted(bench.METHODS), default=["fs1"])
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--eps", type=float, help="default 0.001 in 1D, 0.01 in 2D")
    p.add_argument("--stabilize", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("trace", help="marginal error against wall time per method and epsilon")
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    _solver_flags(p, multi_eps=True)
    _problem_flags(p, 2)
    _add_1d_only(p)
    p.add_argument("--methods", nargs="+", choices=sorted(bench.METHODS), default=["fs1", "naive"])
    p.set_defaults(func=cmd_trace, tol=0.0, itr_max=1000)
    return parser


def _add_1d_only(p):
    # compare/trace take both 1D and 2D problems; these flags only apply in 1D
    p.add_argument("--ricker", action="store_true")
    p.add_argument("--shift", type=float, default=-1.2032)
    p.add_argument("--tmin", type=float, default=-4.0)
    p.add_argument("--tmax", type=float, default=4.0)
    p.add_argument("--h", type=float)


# --------------------------------------------------------------------------
# problem construction
# --------------------------------------------------------------------------


def _require_n(args):
    if args.n is None or args.n < 1:
        raise UsageError("--n must be given as a positive integer")
    return args.n


def _load_pair(args, dim):
    if dim == 1:
        raw = [load_matrix(path).ravel() for path in (args.u, args.v)]
        if raw[0].size != raw[1].size:
            raise UsageError(f"--u has {raw[0].size} values, --v has {raw[1].size}")
        grid = Grid1D(raw[0].size, args.h or 1.0)
        if args.normalize:
            return tuple(normalize_signal(f, args.delta, grid) for f in raw)
        return tuple(validate_measure(f, grid) for f in raw)
    raw = [load_matrix(path) for path in (args.u, args.v)]
    if raw[0].shape != raw[1].shape:
        raise UsageError(f"--u has shape {raw[0].shape}, --v has {raw[1].shape}")
    if args.normalize:
        return tuple(image_to_measure(img, args.delta, args.h1, args.h2) for img in raw)
    grid = Grid2D(raw[0].shape[0], raw[0].shape[1], args.h1, args.h2)
    return tuple(validate_measure(img, grid) for img in raw)


def make_problem(args, dim):
    """Return ``(u, v)`` from whichever problem flags were given."""
    sources = [bool(args.u or args.v), args.random, dim == 1 and getattr(args, "ricker", False)]
    if sum(sources) != 1:
        raise UsageError("choose exactly one of --u/--v, --random, --ricker (1D only)")
    if args.u or args.v:
        if not (args.u and args.v):
            raise UsageError("--u and --v must be given together")
        return _load_pair(args, dim)
    n = _require_n(args)
    if dim == 2:
        m = args.m if args.m is not None else n
        return random_pair_2d(n, m, args.seed, args.h1, args.h2)
    if args.random:
        return random_pair_1d(n, args.seed, Grid1D(n, args.h) if args.h else None)
    if args.h is not None:
        raise UsageError("--h is fixed by --tmin/--tmax for --ricker")
    return ricker_pair(n, args.tmin, args.tmax, args.shift, args.delta)


def _config(args, eps=None) -> SolverConfig:
    return SolverConfig(args.eps if eps is None else eps, tol=args.tol, itr_max=args.itr_max,
                        stabilized=args.stabilize, tau=args.tau,
                        check_interval=args.check_interval)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_solve(args) -> int:
    u, v = make_problem(args, args.dim)
    config = _config(args)
    report, state = (naive_solve if args.naive else solve)(u, v, config)
    grid = u.grid
    print(f"grid            {grid}")
    print(f"epsilon         {config.epsilon:g}")
    print(f"cost            {report.cost!r}")
    print(f"iterations      {report.iterations}")
    print(f"marginal error  {report.final_marginal_error:.6e}")
    print(f"converged       {report.converged}")
    print(f"absorptions     {len(report.stabilization_events)}")
    print(f"wall time       {report.wall_time_seconds:.6f} s")
    if args.dim == 1 and not report.aborted_nonfinite:
        print(f"exact W1        {exact_w1_1d(u, v, grid.h)!r}")
    if args.out:
        rows = [(it, secs, err) for (it, err), secs
                in zip(report.marginal_error_trace, report.checkpoint_seconds)]
        _write(args.out, bench.to_csv(SOLVE_TRACE_HEADER, rows))
    if report.aborted_nonfinite:
        print(f"aborted: non-finite scaling at iteration {report.iterations} "
              "(try --stabilize or a larger --eps)", file=sys.stderr)
        return EXIT_NONFINITE
    if args.plan_out:
        plan = TransportPlanView(state, KernelSpec.from_grid(grid, config.epsilon), grid)
        dense = plan.materialize(PLAN_OUT_MAX)
        _write(args.plan_out, bench.matrix_to_csv(dense))
    return EXIT_OK


def cmd_compare(args) -> int:
    u, v = make_problem(args, args.dim)
    result = bench.compare(u, v, _config(args))
    print(f"size            {result['size']}")
    print(f"iterations      {result['iterations']}")
    print(f"fs1 seconds     {result['fs1_seconds']:.6f}")
    print(f"naive seconds   {result['naive_seconds']:.6f}")
    print(f"speed-up        {result['speedup']:.3f}")
    print(f"plan ||diff||_F {result['plan_frobenius_diff']:.3e}")
    if args.out:
        _write(args.out, bench.to_csv(COMPARE_HEADER, [[result[k] for k in COMPARE_HEADER]]))
    if result["aborted"]:
        print("aborted: non-finite scaling", file=sys.stderr)
        return EXIT_NONFINITE
    return EXIT_OK


def cmd_bench(args) -> int:
    sizes = args.sizes or (bench.DEFAULT_SIZES_2D if args.dim == 2 else bench.DEFAULT_SIZES_1D)
    if any(s < 1 for s in sizes) or args.trials < 1 or args.iterations < 1:
        raise UsageError("sizes, --trials and --iterations must be positive")
    meta = bench.bench_metadata(sizes, args.dim, args.trials, args.iterations)
    for key, value in meta.items():
        print(f"# {key}: {value}")

    def progress(rec):
        print(f"{rec.method:>5} size={rec.size:<8d} trial_seed={rec.seed:<4d} "
              f"{rec.wall_time_seconds:.6f} s", flush=True)

    records = bench.run_bench(sizes, args.methods, args.dim, args.trials, args.iterations,
                              args.eps, args.seed, args.stabilize, progress)
    for method, slope in bench.fitted_exponents(records).items():
        print(f"fitted exponent {method}: {slope:.3f}")
    if args.out:
        _write(args.out, bench.records_to_csv(records))
    return EXIT_OK


def cmd_trace(args) -> int:
    u, v = make_problem(args, args.dim)
    rows = bench.trace(u, v, args.eps, args.methods, args.itr_max, args.tol, args.stabilize,
                       args.tau, args.check_interval)
    text = bench.to_csv(bench.TRACE_HEADER, rows)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    aborted = [(r[0], r[1]) for r in rows if r[-1]]
    for method, eps in aborted:
        print(f"aborted: {method} at eps={eps:g} hit a non-finite scaling", file=sys.stderr)
    return EXIT_NONFINITE if aborted else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, FastSinkhornError, ValueError, OSError) as exc:
        print(f"fastsinkhorn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
