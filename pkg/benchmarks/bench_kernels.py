"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints per-call timings for both hot kernels at the sizes the policies hit,
then one end-to-end TOFU run under each backend.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from linbet import _kernels_py

try:
    from linbet import _kernels as compiled
except ImportError:
    compiled = None

END_TO_END = """
import time
from linbet import AlgoConfig, generate_instance, kernels
from linbet.harness import run_single
inst = generate_instance("S4", 0)
t0 = time.perf_counter()
run_single(inst, AlgoConfig("tofu"), {T}, 0, 0)
print(kernels.BACKEND, time.perf_counter() - t0)
"""


def bench(label, fn, args, repeat):
    best = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))
    print(f"  {label:10s} {best * 1e3:9.3f} ms")
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--T", type=int, default=3000, help="horizon of the end-to-end TOFU run")
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    for d, t in [(10, 2_000), (20, 10_000)]:
        U = rng.normal(size=(d, t))
        y = rng.pareto(2.0, size=t)
        print(f"truncated_projection d={d} t={t}")
        py = bench("numpy", _kernels_py.truncated_projection, (U, y, 1.5, True), args.repeat)
        if compiled:
            c = bench("compiled", compiled.truncated_projection, (U, y, 1.5, True), args.repeat)
            print(f"  speedup    {py / c:9.2f}x")

    for k, d in [(317, 10), (373, 20)]:
        Z = rng.normal(size=(k, d))
        print(f"lower_median_distances k={k} d={d}")
        py = bench("numpy", _kernels_py.lower_median_distances, (Z,), args.repeat)
        if compiled:
            c = bench("compiled", compiled.lower_median_distances, (Z,), args.repeat)
            print(f"  speedup    {py / c:9.2f}x")

    print(f"end-to-end TOFU on S4, T={args.T}")
    for pure in ("1", "0"):
        env = {**os.environ, "LINBET_PURE_PYTHON": pure}
        out = subprocess.run([sys.executable, "-c", END_TO_END.format(T=args.T)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:10s} {float(out[1]):9.3f} s")


if __name__ == "__main__":
    main()
