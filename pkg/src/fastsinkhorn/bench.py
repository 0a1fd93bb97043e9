"""Benchmark harness: fast-vs-naive comparisons, size sweeps, error traces.

All timings come from :func:`time.perf_counter` around the iteration loop only
(input generation and cost evaluation are excluded), after one untimed warm-up
run per configuration.  Trials run serially.
"""

from __future__ import annotations

import csv
import io
import math
import platform
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kernels
from .exceptions import DegenerateInputError, TooLargeError
from .problems import RNG_ALGORITHM, random_pair_1d, random_pair_2d
from .solver import naive_solve, solve
from .types import KernelSpec, SolverConfig, TransportPlanView

METHODS = {"fs1": solve, "naive": naive_solve}

DEFAULT_SIZES_1D = tuple(2 ** k for k in range(10, 21))
DEFAULT_SIZES_2D = (10, 20, 40, 80, 160)


@dataclass
class BenchRecord:
    method: str
    size: int
    epsilon: float
    iterations: int
    wall_time_seconds: float
    marginal_error: float
    seed: int
    dim: int = 1

    @classmethod
    def header(cls):
        return [f.name for f in fields(cls)]


def fit_loglog_slope(points) -> float:
    """Least-squares slope of ``log(time)`` against ``log(size)``."""
    pts = [(float(s), float(t)) for s, t in points]
    if len(pts) < 2:
        raise DegenerateInputError("need at least two (size, time) points")
    if any(not (s > 0 and t > 0) for s, t in pts):
        raise DegenerateInputError("sizes and times must be positive")
    x = np.log([s for s, _ in pts])
    y = np.log([t for _, t in pts])
    if np.ptp(x) == 0:
        raise DegenerateInputError("all sizes are equal")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def naive_fits(size: int, dim: int) -> bool:
    return size <= (kernels.NAIVE_MAX_2D if dim == 2 else kernels.NAIVE_MAX_1D)


def _problem(dim: int, n: int, seed: int):
    if dim == 2:
        return random_pair_2d(n, n, seed)
    return random_pair_1d(n, seed)


def timed_run(method: str, u, v, config: SolverConfig, warmup: bool = True):
    """Run one solve after an untimed two-iteration warm-up."""
    fn = METHODS[method]
    if warmup:
        fn(u, v, SolverConfig(config.epsilon, tol=0.0, itr_max=2, stabilized=config.stabilized,
                              tau=config.tau))
    return fn(u, v, config)


def run_bench(sizes, methods=("fs1",), dim: int = 1, trials: int = 10, iterations: int = 200,
              epsilon: float | None = None, seed: int = 0, stabilized: bool = False,
              progress=None) -> list[BenchRecord]:
    """Time fixed-iteration runs on random problems for every (method, size, trial).

    ``sizes`` are point counts in 1D and per-axis counts in 2D (records store
    the total point count).  Naive rows above the quadratic cap are skipped.
    """
    if epsilon is None:
        epsilon = 0.01 if dim == 2 else 0.001
    # termination check only at the last iteration, identical for both methods
    config = SolverConfig(epsilon, tol=0.0, itr_max=iterations, stabilized=stabilized,
                          check_interval=iterations)
    records = []
    for n in sizes:
        total = n * n if dim == 2 else n
        for method in methods:
            if method == "naive" and not naive_fits(total, dim):
                continue
            for trial in range(trials):
                trial_seed = seed + trial
                u, v = _problem(dim, n, trial_seed)
                report, _ = timed_run(method, u, v, config, warmup=(trial == 0))
                records.append(BenchRecord(method, total, epsilon, report.iterations,
                                           report.wall_time_seconds,
                                           report.final_marginal_error, trial_seed, dim))
                if progress is not None:
                    progress(records[-1])
    return records


def fitted_exponents(records) -> dict[str, float]:
    """Per-method slope fitted through the per-size median wall times."""
    out = {}
    for method in sorted({r.method for r in records}):
        by_size = {}
        for r in records:
            if r.method == method:
                by_size.setdefault(r.size, []).append(r.wall_time_seconds)
        if len(by_size) >= 2:
            out[method] = fit_loglog_slope((s, float(np.median(t))) for s, t in sorted(by_size.items()))
    return out


def bench_metadata(sizes, dim, trials, iterations) -> dict:
    return {
        "rng": RNG_ALGORITHM,
        "dim": dim,
        "sizes": " ".join(str(s) for s in sizes),
        "trials": trials,
        "iterations": iterations,
        "python": platform.python_version(),
        "machine": platform.machine(),
    }


def plan_frobenius_diff(a: TransportPlanView, b: TransportPlanView,
                        block_entries: int = 4_000_000) -> float:
    """``||A - B||_F`` of two plans on one grid, built a block of rows at a time."""
    size = a.grid.size
    step = max(1, block_entries // size)
    total = 0.0
    for start in range(0, size, step):
        stop = min(start + step, size)
        total += float(np.sum((a.rows(start, stop) - b.rows(start, stop)) ** 2))
    return math.sqrt(total)


def compare(u, v, config: SolverConfig) -> dict:
    """Run both methods with identical inputs and budget; compare time and plan."""
    if not naive_fits(u.grid.size, u.grid.ndim):
        raise TooLargeError(f"naive solver cannot handle {u.grid.size} points")
    fast_report, fast_state = timed_run("fs1", u, v, config)
    naive_report, naive_state = timed_run("naive", u, v, config)
    kernel = KernelSpec.from_grid(u.grid, config.epsilon)
    frob = math.nan
    if not (fast_report.aborted_nonfinite or naive_report.aborted_nonfinite):
        frob = plan_frobenius_diff(TransportPlanView(fast_state, kernel, u.grid),
                                   TransportPlanView(naive_state, kernel, u.grid))
    return {
        "dim": u.grid.ndim,
        "size": u.grid.size,
        "epsilon": config.epsilon,
        "iterations": fast_report.iterations,
        "fs1_seconds": fast_report.wall_time_seconds,
        "naive_seconds": naive_report.wall_time_seconds,
        "speedup": naive_report.wall_time_seconds / fast_report.wall_time_seconds,
        "plan_frobenius_diff": frob,
        "fs1_cost": fast_report.cost,
        "naive_cost": naive_report.cost,
        "aborted": fast_report.aborted_nonfinite or naive_report.aborted_nonfinite,
        "_reports": (fast_report, naive_report),
    }


TRACE_HEADER = ["method", "epsilon", "iteration", "wall_time_seconds", "marginal_error", "aborted"]


def trace(u, v, epsilons, methods=("fs1", "naive"), itr_max: int = 1000, tol: float = 0.0,
          stabilized: bool = False, tau: float = 1e10, check_interval: int = 1):
    """Marginal error against cumulative wall time for each (method, epsilon).

    Yields one row per checkpoint; a run that hits a non-finite value ends with
    a row whose ``aborted`` field is 1 and whose error is ``inf``.
    """
    rows = []
    for method in methods:
        for eps in epsilons:
            config = SolverConfig(eps, tol=tol, itr_max=itr_max, stabilized=stabilized, tau=tau,
                                  check_interval=check_interval)
            report, _ = timed_run(method, u, v, config)
            last = len(report.marginal_error_trace) - 1
            for k, ((it, err), secs) in enumerate(zip(report.marginal_error_trace,
                                                      report.checkpoint_seconds)):
                aborted = int(report.aborted_nonfinite and k == last)
                rows.append([method, eps, it, secs, err, aborted])
    return rows


def format_number(x) -> str:
    """Locale-independent, round-trippable text for CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(c) for c in row])
    return buf.getvalue()


def matrix_to_csv(mat) -> str:
    """Header-less CSV, one matrix row per line."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.atleast_2d(mat):
        writer.writerow([format_number(c) for c in row])
    return buf.getvalue()


def records_to_csv(records) -> str:
    header = BenchRecord.header()
    return to_csv(header, ([asdict(r)[h] for h in header] for r in records))

