"""Compare the compiled and numpy Gaussian kernels.

    python benchmarks/bench_backends.py [--count N] [--repeat K]

Prints best-of-K wall time for each backend, the speedup, and whether the
two produced identical bits.
"""

import argparse
import time

import numpy as np

from flora import _fallback
from flora.matcore import mix64

try:
    from flora._kernels import gauss_fill as compiled_fill
except ImportError:
    compiled_fill = None


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--count", type=int, default=3_000_000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=12345)
    args = p.parse_args()

    key = mix64(args.seed)
    out_py = np.empty(args.count)
    t_py = best_of(lambda: _fallback.gauss_fill(key, 0, out_py), args.repeat)
    print(f"numpy fallback : {t_py * 1e3:9.2f} ms  ({args.count / t_py / 1e6:6.1f} M samples/s)")
    if compiled_fill is None:
        print("compiled kernel: not built (pip install -e . --no-build-isolation)")
        return
    out_c = np.empty(args.count)
    t_c = best_of(lambda: compiled_fill(key, 0, out_c), args.repeat)
    print(f"compiled kernel: {t_c * 1e3:9.2f} ms  ({args.count / t_c / 1e6:6.1f} M samples/s)")
    print(f"speedup        : {t_py / t_c:9.2f}x")
    same = out_py.view(np.uint64).tobytes() == out_c.view(np.uint64).tobytes()
    print(f"bit-identical  : {same}")


if __name__ == "__main__":
    main()
