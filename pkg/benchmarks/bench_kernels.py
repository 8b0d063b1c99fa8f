"""Compare the compiled and NumPy expectation kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--threads 1]

Times the raw kernels on one backward step and a full call solve with each
backend, and checks that both give the same values.
"""

import argparse
import math
import os
import time

import numpy as np

from slhjb import kernels
from slhjb.interpolation import Grid, pchip_slopes
from slhjb.problem import TimeMesh, bergman_problem
from slhjb.quadrature import rule_for
from slhjb.solver import backward_solve


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), result


def kernel_case(J, M):
    lo, hi = 0.0, math.log(1200.0)
    dx = (hi - lo) / J
    x = np.linspace(lo, hi, J + 1)
    values = np.ascontiguousarray(np.maximum(np.exp(x) - 100.0, 0.0))
    h = 1.0 / 1024
    base = x + 0.07 * h
    c1 = np.full(J + 1, 0.4 * math.sqrt(h))
    c2 = np.zeros(J + 1)
    rule = rule_for(M)
    return values, lo, hi, dx, base, c1, c2, np.ascontiguousarray(rule.nodes[:, 0]), rule.weights


def run_kernel(module, kind, case, threads):
    values, lo, hi, dx, base, c1, c2, xi, lam = case
    out = np.empty(base.shape[0])
    flags = np.empty(base.shape[0], dtype=np.uint8)
    if kind == "linear":
        module.expect_linear_1d(values, lo, hi, dx, base, c1, c2, xi, lam, 2, out, flags, threads)
    else:
        slopes = np.ascontiguousarray(pchip_slopes(values, dx))
        module.expect_pchip_1d(values, slopes, lo, hi, dx, base, c1, c2, xi, lam, 2, out, flags, threads)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=int(os.environ.get("SLHJB_NUM_THREADS", "1")))
    args = ap.parse_args()
    backends = sorted(kernels.BACKENDS)
    print(f"backends: {', '.join(backends)}; threads={args.threads}")
    if "cython" not in backends:
        print("compiled extension not available; only the NumPy kernels are timed")

    print(f"{'case':34s} " + " ".join(f"{b:>10s}" for b in backends) + "  py/cy  max|diff|")
    for kind in ("linear", "pchip"):
        for J, M in ((4096, 2), (65536, 4), (262144, 4)):
            case = kernel_case(J, M)
            timings, outs = [], []
            for b in backends:
                t, out = best_of(lambda: run_kernel(kernels.get(b), kind, case, args.threads), args.repeat)
                timings.append(t)
                outs.append(out)
            diff = float(np.max(np.abs(outs[0] - outs[-1])))
            speed = timings[-1] / timings[0]
            label = f"{kind} kernel J={J} M={M}"
            print(f"{label:34s} " + " ".join(f"{t * 1e3:8.2f}ms" for t in timings)
                  + f"   {speed:6.1f}x  {diff:.1e}")

    p = bergman_problem()
    for N, M in ((64, 2), (256, 4)):
        grid = Grid.uniform(0.0, math.log(1200.0), N * N // 4, "payoff_asymptotic")
        mesh = TimeMesh(N, 1.0)
        timings, values = [], []
        for b in backends:
            t, s = best_of(lambda: backward_solve(p, grid, mesh, rule_for(M), keep="initial", backend=b),
                           max(1, args.repeat // 2))
            timings.append(t)
            values.append(s.values[0])
        diff = float(np.max(np.abs(values[0] - values[-1])))
        speed = timings[-1] / timings[0]
        label = f"call solve N={N} J={N * N // 4} M={M}"
        print(f"{label:34s} " + " ".join(f"{t * 1e3:8.1f}ms" for t in timings) + f"   {speed:6.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
