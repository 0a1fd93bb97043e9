import csv

import numpy as np
import pytest

from fastsinkhorn.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def field(out, name):
    for line in out.splitlines():
        if line.startswith(name):
            return line[len(name):].strip()
    raise KeyError(name)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def measure_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("0.1\n0.2\n0.3\n0.4\n")
    return p


class TestSolve1D:
    def test_self_distance(self, capsys, measure_csv):
        code, out, _ = run(capsys, "solve1d", "--u", measure_csv, "--v", measure_csv,
                           "--eps", 0.001, "--h", 0.01, "--tol", 1e-9)
        assert code == 0
        assert float(field(out, "cost")) < 1e-6
        assert float(field(out, "exact W1")) == 0.0

    def test_random_writes_trace_and_plan(self, capsys, tmp_path):
        out_csv, plan_csv = tmp_path / "t.csv", tmp_path / "p.csv"
        code, out, _ = run(capsys, "solve1d", "--random", "--n", 12, "--eps", 0.5, "--tol", 1e-10,
                           "--seed", 3, "--out", out_csv, "--plan-out", plan_csv)
        assert code == 0 and field(out, "converged") == "True"
        rows = read_csv(out_csv)
        assert rows[0] == ["iteration", "wall_time_seconds", "marginal_error"]
        assert int(rows[-1][0]) == int(field(out, "iterations"))
        plan = np.loadtxt(plan_csv, delimiter=",")
        assert plan.shape == (12, 12)
        assert plan.sum() == pytest.approx(1.0, abs=1e-9)

    def test_naive_matches_fast(self, capsys):
        args = ("solve1d", "--random", "--n", 30, "--eps", 0.1, "--tol", 0, "--itr-max", 50)
        _, fast, _ = run(capsys, *args)
        _, naive, _ = run(capsys, *args, "--naive")
        assert float(field(fast, "cost")) == pytest.approx(float(field(naive, "cost")), rel=1e-12)

    def test_ricker_aborts_without_stabilization(self, capsys):
        code, out, err = run(capsys, "solve1d", "--ricker", "--n", 10000, "--shift", -1.2032,
                             "--delta", 1e-3, "--eps", 0.001, "--no-stabilize", "--itr-max", 500)
        assert code == 2
        assert int(field(out, "iterations")) < 200
        assert "non-finite" in err

    def test_ricker_stabilized_completes(self, capsys):
        code, out, _ = run(capsys, "solve1d", "--ricker", "--n", 10000, "--shift", -1.2032,
                           "--delta", 1e-3, "--eps", 0.001, "--stabilize", "--tau", 1e10,
                           "--itr-max", 500)
        assert code == 0
        assert int(field(out, "iterations")) == 500
        assert np.isfinite(float(field(out, "cost")))

    def test_normalize_raw_samples(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        a.write_text("0\n1\n0\n0\n")
        b.write_text("0\n0\n2\n0\n")
        code, out, _ = run(capsys, "solve1d", "--u", a, "--v", b, "--normalize", "--delta", 1e-6,
                           "--eps", 0.05, "--h", 0.25, "--stabilize")
        assert code == 0
        assert float(field(out, "cost")) == pytest.approx(0.25, rel=1e-3)


class TestSolve2D:
    def test_random(self, capsys):
        code, out, _ = run(capsys, "solve2d", "--random", "--n", 4, "--m", 3, "--eps", 0.5,
                           "--h1", 1, "--h2", 2)
        assert code == 0 and "Grid2D(n=4, m=3, h1=1.0, h2=2.0)" in out

    def test_pgm_images(self, capsys, tmp_path):
        a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
        a.write_text("P2\n3 2\n255\n255 0 0\n0 0 0\n")
        b.write_text("P2\n3 2\n255\n0 0 0\n0 0 255\n")
        code, out, _ = run(capsys, "solve2d", "--u", a, "--v", b, "--normalize", "--delta", 1e-9,
                           "--eps", 0.05, "--stabilize", "--tol", 1e-8)
        assert code == 0
        # corner to opposite corner: one row step plus two column steps
        assert float(field(out, "cost")) == pytest.approx(3.0, rel=1e-4)


class TestCompare:
    def test_1d(self, capsys, tmp_path):
        out_csv = tmp_path / "c.csv"
        code, out, _ = run(capsys, "compare", "--random", "--n", 64, "--eps", 0.01, "--tol", 0,
                           "--itr-max", 10, "--out", out_csv)
        assert code == 0 and float(field(out, "speed-up")) > 0
        header, row = read_csv(out_csv)
        rec = dict(zip(header, row))
        assert float(rec["plan_frobenius_diff"]) <= 1e-12
        assert rec["size"] == "64" and rec["aborted"] == "0"

    def test_2d(self, capsys, tmp_path):
        out_csv = tmp_path / "c.csv"
        code, _, _ = run(capsys, "compare", "--dim", 2, "--random", "--n", 5, "--eps", 0.01,
                         "--tol", 0, "--itr-max", 20, "--out", out_csv)
        assert code == 0
        rec = dict(zip(*read_csv(out_csv)))
        assert rec["dim"] == "2" and rec["size"] == "25"

    def test_too_large_is_input_error(self, capsys):
        code, _, err = run(capsys, "compare", "--random", "--n", 20000, "--itr-max", 1)
        assert code == 1 and "naive" in err


class TestBench:
    def test_sweep(self, capsys, tmp_path):
        out_csv = tmp_path / "b.csv"
        code, out, _ = run(capsys, "bench", "--sizes", 100, 200, "--methods", "fs1", "naive",
                           "--trials", 2, "--iterations", 5, "--out", out_csv)
        assert code == 0
        assert "# rng: numpy.random.PCG64" in out
        assert "fitted exponent fs1" in out and "fitted exponent naive" in out
        rows = read_csv(out_csv)
        assert rows[0] == ["method", "size", "epsilon", "iterations", "wall_time_seconds",
                           "marginal_error", "seed", "dim"]
        assert len(rows) == 1 + 8

    def test_bad_sizes(self, capsys):
        code, _, _ = run(capsys, "bench", "--sizes", 0, 10)
        assert code == 1


class TestTrace:
    def test_stdout_csv(self, capsys):
        code, out, _ = run(capsys, "trace", "--random", "--n", 40, "--eps", 0.1, 0.01,
                           "--itr-max", 3)
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "method,epsilon,iteration,wall_time_seconds,marginal_error,aborted"
        assert len(lines) == 1 + 2 * 2 * 3

    def test_ricker_abort_marker(self, capsys, tmp_path):
        out_csv = tmp_path / "t.csv"
        code, _, err = run(capsys, "trace", "--ricker", "--n", 2000, "--eps", 0.001,
                           "--itr-max", 300, "--check-interval", 20, "--methods", "fs1",
                           "--out", out_csv)
        assert code == 2 and "fs1" in err
        rows = read_csv(out_csv)
        assert rows[-1][5] == "1" and rows[-1][4] == "inf"


class TestUsage:
    @pytest.mark.parametrize("argv", [
        [],
        ["solve1d", "--bogus"],
        ["solve1d", "--eps", "abc", "--random", "--n", "4"],
        ["solve1d", "--itr-max", "5"],
        ["solve1d", "--random"],
        ["solve1d", "--random", "--ricker", "--n", "10"],
        ["solve1d", "--u", "only.csv"],
        ["solve1d", "--ricker", "--n", "10", "--h", "0.1"],
        ["solve1d", "--random", "--n", "4", "--eps", "-1"],
        ["solve1d", "--random", "--n", "4", "--tau", "0.5"],
        ["solve2d", "--random", "--n", "3", "--h1", "0"],
    ])
    def test_exit_one(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            code = main(argv)
            raise SystemExit(code)
        assert exc.value.code == 1

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "solve1d", "--u", tmp_path / "no.csv", "--v", tmp_path / "no.csv")
        assert code == 1 and "error" in err

    def test_invalid_measure(self, capsys, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("0.5\n0.4\n")
        code, _, err = run(capsys, "solve1d", "--u", p, "--v", p)
        assert code == 1 and "mass" in err

    def test_zero_weights_rejected(self, capsys, tmp_path):
        p = tmp_path / "z.csv"
        p.write_text("0\n1\n")
        code, _, err = run(capsys, "solve1d", "--u", p, "--v", p)
        assert code == 1 and "positive" in err

    def test_length_mismatch(self, capsys, tmp_path, measure_csv):
        p = tmp_path / "short.csv"
        p.write_text("0.5\n0.5\n")
        code, _, _ = run(capsys, "solve1d", "--u", measure_csv, "--v", p)
        assert code == 1
