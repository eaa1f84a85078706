"""Compare the numba and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--sizes 50,100,200] [--repeat 5]

Times the exact pairwise accumulation and the sampled accumulation for both
backends at several group sizes and prints a small table.  The first numba
call includes JIT compilation and is excluded via a warmup pass.
"""

import argparse
import time

import numpy as np

from uhet import _kernels_np

try:
    from uhet import _kernels_nb
except ImportError:
    _kernels_nb = None


def make_instance(gen, n):
    ys = [gen.standard_normal(n) for _ in range(4)]
    ws = [gen.uniform(0.2, 3.0, n) for _ in range(4)]
    args = (ys[0], ys[1], ws[0], ws[1], ys[2], ys[3], ws[2], ws[3])
    m = 200 * 4 * n
    idx = tuple(gen.integers(0, n, m) for _ in range(4))
    return args, idx


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="50,100,200")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    backends = [("numpy", _kernels_np)]
    if _kernels_nb is not None:
        backends.append(("numba", _kernels_nb))
    else:
        print("numba backend unavailable; timing numpy only")

    gen = np.random.default_rng(0)
    print(f"{'kernel':<9}{'n/group':>8}" +
          "".join(f"{name + ' [ms]':>14}" for name, _ in backends) +
          (f"{'speedup':>10}" if len(backends) == 2 else ""))
    for n in sizes:
        pair_args, idx = make_instance(gen, n)
        for kernel in ("exact", "sampled"):
            row = f"{kernel:<9}{n:>8}"
            times = []
            for _, mod in backends:
                if kernel == "exact":
                    fn = lambda m=mod: m.exact_pair(*pair_args)
                else:
                    fn = lambda m=mod: m.sampled_pair(*pair_args, *idx)
                fn()  # warmup (includes JIT compile for numba)
                t = best_of(fn, args.repeat)
                times.append(t)
                row += f"{t * 1e3:>14.3f}"
            if len(times) == 2:
                row += f"{times[0] / times[1]:>9.2f}x"
            print(row)


if __name__ == "__main__":
    main()
