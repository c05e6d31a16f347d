import csv
import io
import os
import subprocess
import sys

import numpy as np
import pytest

from dividend_hjb import cli
from dividend_hjb.errors import ConvergenceFailure

MODEL = ["--a", "0.03", "--b", "0.5", "--theta", "0.4", "--eta", "0.8", "--beta", "0.1", "--p", "0.01"]
CHEAP_MODEL = MODEL[:7] + ["0.4"] + MODEL[8:]


def run(args):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(args, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def table(text):
    return list(csv.reader(io.StringIO(text, newline="")))


def test_solve_noncheap(tmp_path):
    path = tmp_path / "solve.csv"
    code, out, _ = run(["solve", *MODEL, "--xmin", "0.1", "--xmax", "50", "--points", "500", "--out", str(path)])
    assert code == 0
    assert out.startswith("x_star=")
    assert abs(float(out.strip().split("=")[1]) - 11.2578) <= 5e-4
    raw = path.read_bytes()
    assert raw.count(b"\r\n") == 501 and raw.endswith(b"\r\n")
    rows = table(raw.decode())
    assert rows[0] == ["x", "V", "Vprime", "q", "c", "hjb_residual"]
    data = np.array(rows[1:], dtype=float)
    assert data.shape == (500, 6)
    assert np.all((data[:, 3] >= 0) & (data[:, 3] <= 1))
    assert all(f"{float(v):.12g}" == v for row in rows[1:] for v in row)


def test_solve_cheap_to_stdout():
    code, out, _ = run(["solve", *CHEAP_MODEL, "--xmin", "0.1", "--xmax", "50", "--points", "20"])
    assert code == 0
    first, rest = out.split("\n", 1)
    assert first == "x_star=20.625"
    assert len(table(rest)) == 21


def test_solve_rejects_p_outside_unit_interval():
    args = ["solve", *MODEL[:-1], "1.5", "--xmin", "0.1", "--xmax", "50", "--points", "5"]
    code, out, err = run(args)
    assert code == 2 and "0 < p < 1" in err and out == ""


def test_solve_names_violated_assumption():
    args = ["solve", "--a", "1", "--b", "1", "--theta", "0.4", "--eta", "0.8", "--beta", "0.001",
            "--p", "0.9", "--xmin", "0.1", "--xmax", "5", "--points", "5"]
    code, _, err = run(args)
    assert code == 2 and "alpha*(1-p) > 1" in err


@pytest.mark.parametrize("extra", [
    ["--xmin", "5", "--xmax", "1", "--points", "5"],
    ["--xmin", "0.1", "--xmax", "5", "--points", "0"],
    ["--xmin", "0.1", "--xmax", "5"],
])
def test_solve_usage_errors(extra, capsys):
    assert run(["solve", *MODEL, *extra])[0] == 2


def test_missing_model_flag(capsys):
    assert run(["solve", *MODEL[2:], "--xmin", "0.1", "--xmax", "5", "--points", "5"])[0] == 2


def test_solve_exits_one_when_rows_fail_checks(monkeypatch):
    monkeypatch.setattr(cli, "OUTER_RESIDUAL_TOL", 0.0)
    code, out, err = run(["solve", *MODEL, "--xmin", "0.1", "--xmax", "50", "--points", "50"])
    assert code == 1 and "fail" in err
    assert out.startswith("x_star=")


def test_numerical_failure_exit_code(monkeypatch):
    def broken(params):
        raise ConvergenceFailure("forced")

    monkeypatch.setattr(cli, "solve", broken)
    code, _, err = run(["solve", *MODEL, "--xmin", "0.1", "--xmax", "50", "--points", "5"])
    assert code == 1 and "forced" in err


def _sweep(param, lo, hi, steps, model=MODEL):
    drop = model.index(f"--{param}")
    fixed = model[:drop] + model[drop + 2:]
    code, out, err = run(["sweep", *fixed, "--param", param, "--from", lo, "--to", hi, "--steps", steps])
    assert code == 0, err
    rows = table(out)
    return rows[0], np.array(rows[1:], dtype=float)


def test_sweep_p():
    header, data = _sweep("p", "0.005", "0.5", "12")
    assert header == ["p", "x_star", "q_at_x", "c_at_x", "valid"]
    assert np.all(data[:, 4] == 1)
    assert np.all(np.diff(data[:, 1]) < 0)
    assert np.all(np.diff(data[:, 3]) > 0)
    assert np.all(np.diff(data[:, 2]) < 0)


def test_sweep_b():
    _, data = _sweep("b", "0.2", "1.0", "9")
    assert np.all(data[:, 4] == 1)
    assert np.all(np.diff(data[:, 1]) > 0)


def test_sweep_flags_invalid_rows():
    model = ["--a", "1", "--b", "1", "--theta", "0.4", "--eta", "0.8", "--beta", "0.001", "--p", "0.5"]
    code, out, err = run(["sweep", *model[:-2], "--param", "p", "--from", "0.5", "--to", "0.9", "--steps", "3"])
    assert code == 0
    rows = table(out)[1:]
    assert [r[-1] for r in rows] == ["0", "0", "0"]
    assert err.count("warning") == 3


def test_sweep_requires_fixed_flags():
    code, _, err = run(["sweep", *MODEL[2:-2], "--param", "p", "--from", "0.1", "--to", "0.2", "--steps", "2"])
    assert code == 2 and "--a" in err


def _report(out):
    return dict(line.split("=", 1) for line in out.strip().splitlines())


def test_simulate_report_and_per_path_csv(tmp_path):
    path = tmp_path / "paths.csv"
    args = ["simulate", *MODEL, "--x0", "5", "--paths", "64", "--dt", "0.01", "--seed", "3", "--out", str(path)]
    code, out, _ = run(args)
    assert code == 0
    rep = _report(out)
    assert set(rep) == {"policy", "V_analytic", "mc_mean", "std_error", "mc_minus_analytic", "band",
                        "ruin_fraction", "horizon", "result"}
    assert rep["horizon"] == "69.2"
    assert abs(float(rep["V_analytic"]) - 981.005769295) < 1e-6
    rows = table(path.read_bytes().decode())
    assert rows[0] == ["path", "value"] and len(rows) == 65
    assert np.mean([float(r[1]) for r in rows[1:]]) == pytest.approx(float(rep["mc_mean"]), rel=1e-10)


def test_simulate_perturbation_scores_below_analytic():
    args = ["simulate", *MODEL, "--x0", "5", "--paths", "2000", "--seed", "1", "--perturb", "scale_c:0.5"]
    code, out, _ = run(args)
    rep = _report(out)
    assert code == 0 and "scale_c:0.5" in rep["policy"]
    assert float(rep["mc_mean"]) < float(rep["V_analytic"])


@pytest.mark.parametrize("extra", [["--paths", "0"], ["--paths", "5", "--perturb", "bogus:1"],
                                   ["--paths", "5", "--perturb", "scale_c"], ["--paths", "5", "--dt", "-1"]])
def test_simulate_usage_errors(extra, capsys):
    assert run(["simulate", *MODEL, "--x0", "5", *extra])[0] == 2


def test_simulate_rejects_nonpositive_start():
    code, _, err = run(["simulate", *MODEL, "--x0", "0", "--paths", "5"])
    assert code == 2 and "x0" in err


@pytest.mark.parametrize("args", [
    ["solve", *MODEL, "--xmin", "0.1", "--xmax", "50", "--points", "100"],
    ["sweep", *MODEL[:-2], "--param", "p", "--from", "0.01", "--to", "0.3", "--steps", "4"],
    ["simulate", *MODEL, "--x0", "5", "--paths", "40", "--dt", "0.01", "--seed", "9"],
])
def test_repeated_runs_identical(args):
    assert run(args) == run(args)


def test_module_entry_point_and_thread_invariance(tmp_path):
    outs = []
    for threads in ("1", "3"):
        env = dict(os.environ, DIVIDEND_HJB_THREADS=threads, NUMBA_NUM_THREADS="3")
        path = tmp_path / f"paths{threads}.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "dividend_hjb", "simulate", *MODEL, "--x0", "5", "--paths", "50",
             "--dt", "0.01", "--seed", "2", "--out", str(path)],
            capture_output=True, env=env, check=True,
        )
        outs.append((proc.stdout, path.read_bytes()))
    assert outs[0] == outs[1]
