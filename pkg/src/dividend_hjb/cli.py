"""Command-line front end: ``solve``, ``sweep`` and ``simulate``.

Exit codes: 0 success, 1 numerical failure (or a solve row failing its
checks), 2 usage error or violated model assumption. CSV output is written
with 12 significant digits and CRLF row endings.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import DividendHJBError, InvalidParam, InvalidPolicy, UnknownKind, ViolatedAssumption
from .inner import X_FLOOR
from .model import ModelParams
from .montecarlo import PERTURBATIONS, SimConfig, choose_horizon, estimate_value, perturb_policy
from .solution import solve

MODEL_FLAGS = ("a", "b", "theta", "eta", "beta", "p")
INNER_RESIDUAL_TOL = 1e-8
OUTER_RESIDUAL_TOL = 1e-6
EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def fmt(value: float) -> str:
    return f"{float(value):.12g}"


def positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def positive_float(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return x


def perturbation(text: str) -> tuple[str, float]:
    kind, sep, mag = text.partition(":")
    if not sep or kind not in PERTURBATIONS:
        raise argparse.ArgumentTypeError(
            f"expected kind:magnitude with kind in {', '.join(PERTURBATIONS)}, got {text!r}"
        )
    try:
        return kind, float(mag)
    except ValueError:
        raise argparse.ArgumentTypeError(f"magnitude must be a number, got {mag!r}") from None


def _add_model_flags(parser: argparse.ArgumentParser, required: bool = True):
    group = parser.add_argument_group("model")
    for name in MODEL_FLAGS:
        group.add_argument(f"--{name}", type=float, required=required)


def _params(args, **override) -> ModelParams:
    values = {name: getattr(args, name) for name in MODEL_FLAGS}
    values.update(override)
    return ModelParams(**values)


def _open_out(path: Optional[str], stdout):
    if path is None or path == "-":
        return stdout, False
    return open(path, "w", newline="", encoding="ascii"), True


def _write_csv(rows, header, path: Optional[str], stdout):
    buf = io.StringIO(newline="")
    writer = csv.writer(buf)  # RFC 4180: CRLF, minimal quoting
    writer.writerow(header)
    writer.writerows(rows)
    out, close = _open_out(path, stdout)
    try:
        out.write(buf.getvalue())
    finally:
        if close:
            out.close()


# -- solve -------------------------------------------------------------------

def run_solve(args, stdout, stderr) -> int:
    if not (0 < args.xmin < args.xmax):
        raise UsageError("need 0 < --xmin < --xmax")
    params = _params(args)
    sol = solve(params)
    x = np.linspace(args.xmin, args.xmax, args.points)
    V, Vp, _, q, c = sol.evaluate(x)
    res = sol.hjb_residual(x)
    rel = np.abs(res) / np.maximum(1.0, params.beta * V)
    tol = np.where(x <= sol.x_star, INNER_RESIDUAL_TOL, OUTER_RESIDUAL_TOL)
    bad = (q < 0.0) | (q > 1.0) | ~(rel <= tol)
    print(f"x_star={fmt(sol.x_star)}", file=stdout)
    rows = [[fmt(v) for v in row] for row in zip(x, V, Vp, q, c, res)]
    _write_csv(rows, ["x", "V", "Vprime", "q", "c", "hjb_residual"], args.out, stdout)
    if bad.any():
        i = int(np.argmax(bad))
        print(
            f"error: {int(bad.sum())} row(s) fail the q-bound or residual check; "
            f"first at x={fmt(x[i])} (q={fmt(q[i])}, relative residual={rel[i]:.3e})",
            file=stderr,
        )
        return EXIT_NUMERICAL
    return EXIT_OK


# -- sweep -------------------------------------------------------------------

def run_sweep(args, stdout, stderr) -> int:
    missing = [f"--{n}" for n in MODEL_FLAGS if n != args.param and getattr(args, n) is None]
    if missing:
        raise UsageError(f"missing model flag(s): {' '.join(missing)}")
    if not args.probe_x > 0:
        raise UsageError("--probe-x must be positive")
    values = np.linspace(args.start, args.stop, args.steps)
    rows = []
    for value in values:
        try:
            params = _params(args, **{args.param: float(value)})
            sol = solve(params)
            _, _, _, q, c = sol.evaluate(args.probe_x)
            rows.append([fmt(value), fmt(sol.x_star), fmt(q), fmt(c), "1"])
        except DividendHJBError as exc:
            print(f"warning: {args.param}={fmt(value)} skipped: {exc}", file=stderr)
            rows.append([fmt(value), "", "", "", "0"])
    _write_csv(rows, [args.param, "x_star", "q_at_x", "c_at_x", "valid"], args.out, stdout)
    return EXIT_OK


# -- simulate ----------------------------------------------------------------

def run_simulate(args, stdout, stderr) -> int:
    if not args.x0 > X_FLOOR:
        raise UsageError("--x0 must be positive")
    params = _params(args)
    sol = solve(params)
    V0 = sol.evaluate(args.x0)[0]
    policy = sol.policy()
    if args.perturb is not None:
        policy = perturb_policy(policy, *args.perturb)
    horizon = args.horizon
    if horizon is None:
        horizon = choose_horizon(args.x0, params, V0)
    config = SimConfig(
        dt=args.dt, horizon=horizon, n_paths=args.paths, base_seed=args.seed,
        tail_bound_mode=args.tail_bound,
    )
    est = estimate_value(policy, args.x0, params, config, backend=args.backend)
    band = 3.0 * est.std_error + args.allowance * abs(V0)
    gap = est.mean - V0
    lines = [
        f"policy={policy.descriptor}",
        f"V_analytic={fmt(V0)}",
        f"mc_mean={fmt(est.mean)}",
        f"std_error={fmt(est.std_error)}",
        f"mc_minus_analytic={fmt(gap)}",
        f"band={fmt(band)}",
        f"ruin_fraction={fmt(est.ruin_fraction)}",
        f"horizon={fmt(est.horizon)}",
        f"result={'PASS' if abs(gap) <= band else 'FAIL'}",
    ]
    print("\n".join(lines), file=stdout)
    if args.out is not None:
        rows = [[str(i), fmt(v)] for i, v in enumerate(est.samples)]
        _write_csv(rows, ["path", "value"], args.out, stdout)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dividend-hjb",
        description="Optimal dividends with proportional reinsurance under CRRA utility.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="value function and controls on a uniform grid")
    _add_model_flags(p_solve)
    p_solve.add_argument("--xmin", type=positive_float, required=True)
    p_solve.add_argument("--xmax", type=positive_float, required=True)
    p_solve.add_argument("--points", type=positive_int, required=True)
    p_solve.add_argument("--out", help="CSV path; default appends the table to stdout")
    p_solve.set_defaults(handler=run_solve)

    p_sweep = sub.add_parser("sweep", help="free boundary and controls across a parameter range")
    _add_model_flags(p_sweep, required=False)
    p_sweep.add_argument("--param", choices=("p", "b"), required=True)
    p_sweep.add_argument("--from", dest="start", type=float, required=True)
    p_sweep.add_argument("--to", dest="stop", type=float, required=True)
    p_sweep.add_argument("--steps", type=positive_int, required=True)
    p_sweep.add_argument("--probe-x", type=float, default=5.0)
    p_sweep.add_argument("--out", help="CSV path; default stdout")
    p_sweep.set_defaults(handler=run_sweep)

    p_sim = sub.add_parser("simulate", help="Monte Carlo check of the value at x0")
    _add_model_flags(p_sim)
    p_sim.add_argument("--x0", type=float, required=True)
    p_sim.add_argument("--paths", type=positive_int, required=True)
    p_sim.add_argument("--dt", type=positive_float, default=1e-3)
    p_sim.add_argument("--horizon", type=positive_float, default=None,
                       help="truncation time; default keeps the truncation bound below 0.1%% of V(x0)")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--perturb", type=perturbation, default=None, metavar="KIND:MAGNITUDE")
    p_sim.add_argument("--allowance", type=float, default=0.01,
                       help="relative discretisation allowance added to the 3*SE band")
    p_sim.add_argument("--tail-bound", action="store_true",
                       help="add the discounted asymptotic value at the horizon for surviving paths")
    p_sim.add_argument("--backend", choices=("numba", "numpy"), default=None)
    p_sim.add_argument("--out", help="per-path CSV of discounted utility")
    p_sim.set_defaults(handler=run_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    try:
        return args.handler(args, stdout, stderr)
    except (UsageError, InvalidParam, ViolatedAssumption, UnknownKind, InvalidPolicy) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    except DividendHJBError as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
