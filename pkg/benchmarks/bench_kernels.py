"""Time the numba kernels against their numpy fallbacks.

Both paths are compiled or imported in the same process, so the numbers
compare like with like. Usage::

    python3 benchmarks/bench_kernels.py [--n 300] [--repeat 5]

An end-to-end ``run_test`` timing is added per path by running the test in
a subprocess with ``JOINTSPEC_DISABLE_NUMBA`` set accordingly.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from jointspec import kernels
from jointspec.bootstrap import survival

END_TO_END = """
import time
from jointspec.harness import EngineParams, run_test
from jointspec.models import DgpSpec, get_model, simulate_dgp
x = simulate_dgp(DgpSpec("ar1garch"), {n} + 1, 0)
run_test(x, get_model("ar1garch11"), EngineParams(B=200, m=50))  # warm-up and compile
t = time.perf_counter()
run_test(x, get_model("ar1garch11"), EngineParams(B=500, m=100), seed=1)
print(time.perf_counter() - t)
"""


def cases(n, rng):
    x = rng.normal(size=n)
    lag = rng.normal(size=n)
    w = rng.normal(size=n)
    g = rng.normal(size=(n, 3))
    a = rng.normal(size=(n, 3))
    phi = rng.normal(size=(n, 3))
    L = rng.normal(size=(n, 3))
    N = np.cov(phi.T)
    surv = survival(lag)
    return {
        "garch_filter": ((x, 0.1, 0.1, 0.8, 1.0),),
        "argarch_filter": ((x, 0.02, 0.3, 0.1, 0.1, 0.8, 1.0),),
        "cvm_double_sum": ((lag, w),),
        "nw_ratio": ((lag, g, np.abs(w) + 0.5, 0.3, 1e-8),),
        "khmaladze_values": ((lag, w, g, a, np.sort(lag)),),
        "build_m": ((surv, w, phi, L, N),),
    }


def end_to_end(n, disable):
    env = dict(os.environ, JOINTSPEC_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", END_TO_END.format(n=n)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, (call_args,) in cases(args.n, rng).items():
        fast = getattr(kernels, f"{name}_nb")
        slow = getattr(kernels, f"{name}_np")
        fast(*call_args)  # compile
        t_nb = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
        print(f"{name:<18}{1e3 * t_nb:>10.3f}{1e3 * t_np:>10.3f}{t_np / t_nb:>9.1f}")
    if not args.skip_end_to_end:
        t_nb, t_np = end_to_end(args.n, False), end_to_end(args.n, True)
        print(f"{'run_test':<18}{1e3 * t_nb:>10.1f}{1e3 * t_np:>10.1f}{t_np / t_nb:>9.1f}")


if __name__ == "__main__":
    main()
