"""Compare the compiled and numpy Monte Carlo backends.

Both backends produce identical samples, so the benchmark also checks bitwise
agreement. Timings exclude compilation (one warm-up call per backend).

    python3 benchmarks/bench_montecarlo.py --paths 2000 --horizon 10
"""

import argparse
import time

import numpy as np

from dividend_hjb import ModelParams, solve
from dividend_hjb._accel import HAVE_NUMBA, apply_thread_cap
from dividend_hjb.montecarlo import SimConfig, estimate_value


def time_backend(policy, params, config, x0, backend, repeats):
    warm = SimConfig(dt=config.dt, horizon=config.dt * 64, n_paths=16, base_seed=config.base_seed)
    estimate_value(policy, x0, params, warm, backend=backend)
    best, est = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        est = estimate_value(policy, x0, params, config, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, est


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--paths", type=int, default=2000)
    parser.add_argument("--horizon", type=float, default=10.0)
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--x0", type=float, default=5.0)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    params = ModelParams(a=0.03, b=0.5, theta=0.4, eta=0.8, beta=0.1, p=0.01)
    policy = solve(params).policy()
    config = SimConfig(dt=args.dt, horizon=args.horizon, n_paths=args.paths)
    steps = args.paths * int(round(args.horizon / args.dt))
    threads = apply_thread_cap()

    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    results = {}
    for backend in backends:
        seconds, est = time_backend(policy, params, config, args.x0, backend, args.repeats)
        results[backend] = (seconds, est)
        print(f"{backend:>6}: {seconds:8.3f} s  {1e9 * seconds / steps:8.1f} ns/path-step  "
              f"mean={est.mean:.6f} se={est.std_error:.6f}")
    if len(results) == 2:
        (t_np, e_np), (t_nb, e_nb) = results["numpy"], results["numba"]
        same = np.array_equal(e_np.samples, e_nb.samples)
        print(f"speedup {t_np / t_nb:.1f}x on {threads} thread(s); samples bit-identical: {same}")


if __name__ == "__main__":
    main()
