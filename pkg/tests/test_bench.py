import csv
import io
import math

import numpy as np
import pytest

from fastsinkhorn import bench
from fastsinkhorn.exceptions import DegenerateInputError, TooLargeError
from fastsinkhorn.problems import random_pair_1d, random_pair_2d, ricker_pair
from fastsinkhorn.types import Grid1D, KernelSpec, SinkhornState, SolverConfig, TransportPlanView


class TestSlopeFit:
    @pytest.mark.parametrize("points, slope", [
        ([(1, 1), (10, 10)], 1.0),
        ([(1, 1), (10, 100)], 2.0),
        ([(1, 2), (10, 2)], 0.0),
    ])
    def test_two_point_fits(self, points, slope):
        assert bench.fit_loglog_slope(points) == pytest.approx(slope, abs=1e-12)

    def test_least_squares(self):
        sizes = np.array([1e3, 2e3, 4e3, 8e3])
        assert bench.fit_loglog_slope(zip(sizes, 3e-7 * sizes ** 1.5)) == pytest.approx(1.5, rel=1e-12)

    @pytest.mark.parametrize("points", [[], [(1, 1)], [(1, 1), (1, 2)], [(0, 1), (2, 2)], [(1, -1), (2, 2)]])
    def test_degenerate(self, points):
        with pytest.raises(DegenerateInputError):
            bench.fit_loglog_slope(points)


class TestRunBench:
    def test_records(self):
        records = bench.run_bench([64, 128], methods=("fs1", "naive"), trials=2, iterations=5)
        assert len(records) == 8
        assert {r.method for r in records} == {"fs1", "naive"}
        for r in records:
            assert r.iterations == 5 and r.wall_time_seconds > 0 and r.dim == 1
            assert r.epsilon == 0.001 and np.isfinite(r.marginal_error)
        assert [r.seed for r in records[:2]] == [0, 1]

    def test_non_timing_fields_reproduce(self):
        strip = lambda rs: [(r.method, r.size, r.iterations, r.marginal_error, r.seed) for r in rs]  # noqa: E731
        a = bench.run_bench([32], methods=("fs1", "naive"), trials=2, iterations=7)
        b = bench.run_bench([32], methods=("fs1", "naive"), trials=2, iterations=7)
        assert strip(a) == strip(b)
        # both methods see identical inputs and give the same error to rounding
        np.testing.assert_allclose(a[0].marginal_error, a[2].marginal_error, rtol=1e-9)

    def test_2d_sizes_are_totals(self):
        records = bench.run_bench([3, 4], dim=2, trials=1, iterations=3)
        assert [r.size for r in records] == [9, 16]
        assert all(r.dim == 2 and r.epsilon == 0.01 for r in records)

    def test_naive_skipped_above_cap(self, monkeypatch):
        monkeypatch.setattr(bench.kernels, "NAIVE_MAX_1D", 40)
        records = bench.run_bench([32, 64], methods=("fs1", "naive"), trials=1, iterations=2)
        assert [(r.method, r.size) for r in records] == [("fs1", 32), ("naive", 32), ("fs1", 64)]

    def test_fitted_exponents_use_medians(self):
        recs = [bench.BenchRecord("fs1", s, 0.1, 1, t, 0.0, k)
                for s, times in [(10, [1.0, 1.0, 50.0]), (100, [10.0, 10.0, 0.01])]
                for k, t in enumerate(times)]
        assert bench.fitted_exponents(recs)["fs1"] == pytest.approx(1.0)

    def test_progress_callback(self):
        seen = []
        bench.run_bench([16], trials=3, iterations=2, progress=seen.append)
        assert len(seen) == 3


class TestCompare:
    def test_1d(self):
        u, v = random_pair_1d(64, 0)
        out = bench.compare(u, v, SolverConfig(0.01, tol=0.0, itr_max=10))
        assert out["iterations"] == 10 and out["speedup"] > 0
        assert out["plan_frobenius_diff"] <= 1e-12
        assert out["fs1_cost"] == pytest.approx(out["naive_cost"], rel=1e-12)

    def test_2d(self):
        u, v = random_pair_2d(4, 4, 0)
        out = bench.compare(u, v, SolverConfig(0.01, tol=0.0, itr_max=50))
        assert out["plan_frobenius_diff"] <= 1e-12 and out["size"] == 16

    def test_abort_gives_nan_diff(self):
        u, v = ricker_pair(1000)
        out = bench.compare(u, v, SolverConfig(0.001, tol=0.0, itr_max=300))
        assert out["aborted"] and math.isnan(out["plan_frobenius_diff"])

    def test_blockwise_frobenius(self):
        rng = np.random.default_rng(2)
        g = Grid1D(50, 0.1)
        kern = KernelSpec.from_grid(g, 0.2)
        a = TransportPlanView(SinkhornState(rng.uniform(0.5, 2, 50), rng.uniform(0.5, 2, 50),
                                            np.zeros(50), np.zeros(50)), kern, g)
        b = TransportPlanView(SinkhornState(rng.uniform(0.5, 2, 50), rng.uniform(0.5, 2, 50),
                                            np.zeros(50), np.zeros(50)), kern, g)
        expected = np.linalg.norm(a.materialize() - b.materialize())
        assert bench.plan_frobenius_diff(a, b, block_entries=120) == pytest.approx(expected, rel=1e-13)
        assert bench.plan_frobenius_diff(a, a) == 0.0

    def test_too_large(self, monkeypatch):
        monkeypatch.setattr(bench.kernels, "NAIVE_MAX_1D", 10)
        u, v = random_pair_1d(11, 0)
        with pytest.raises(TooLargeError):
            bench.compare(u, v, SolverConfig(0.1))


class TestTrace:
    def test_one_iteration_one_row_per_method(self):
        u, v = random_pair_1d(50, 0)
        rows = bench.trace(u, v, [0.01], itr_max=1)
        assert [(r[0], r[2]) for r in rows] == [("fs1", 1), ("naive", 1)]

    def test_rows_per_checkpoint(self):
        u, v = random_pair_1d(50, 0)
        rows = bench.trace(u, v, [0.1, 0.01], methods=("fs1",), itr_max=20, check_interval=5)
        assert len(rows) == 8
        times = [r[3] for r in rows[:4]]
        assert times == sorted(times) and all(r[5] == 0 for r in rows)

    def test_abort_marker(self):
        u, v = ricker_pair(1000)
        rows = bench.trace(u, v, [0.001], methods=("fs1",), itr_max=300, check_interval=10)
        assert rows[-1][5] == 1 and rows[-1][4] == math.inf
        assert all(r[5] == 0 for r in rows[:-1])


class TestCsv:
    def test_schema_and_round_trip(self):
        text = bench.to_csv(["a", "b", "c"], [[1, 0.1, True], [np.int64(2), np.float64(1 / 3), "x"]])
        lines = text.splitlines()
        assert lines[0] == "a,b,c"
        assert lines[1] == "1,0.1,1"
        rows = list(csv.reader(io.StringIO(text)))
        assert float(rows[2][1]) == 1 / 3

    def test_special_values(self):
        assert bench.format_number(float("inf")) == "inf"
        assert bench.format_number(float("nan")) == "nan"
        assert bench.format_number(1e-300) == "1e-300"

    def test_records_csv(self):
        rec = bench.BenchRecord("fs1", 10, 0.1, 5, 0.25, 1e-3, 7, 1)
        text = bench.records_to_csv([rec])
        assert text.splitlines() == ["method,size,epsilon,iterations,wall_time_seconds,marginal_error,seed,dim",
                                     "fs1,10,0.1,5,0.25,0.001,7,1"]

    def test_matrix_csv(self):
        assert bench.matrix_to_csv(np.array([[1.0, 0.5], [0.25, 2.0]])) == "1.0,0.5\n0.25,2.0\n"

    def test_metadata(self):
        meta = bench.bench_metadata([10, 20], 1, 3, 200)
        assert meta["rng"] == "numpy.random.PCG64" and meta["sizes"] == "10 20"
