"""Compare the compiled counting kernels against the pure numpy reference.

Micro-benchmarks time both backends in process (they can be imported side
by side); the optional end-to-end row reruns a small synthesis pipeline in
a subprocess with MARGSYN_PURE=1 to force the fallback path.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from margsyn._kernels import pure

try:
    from margsyn._kernels import _speedups as compiled
except ImportError:
    compiled = None

WORKLOADS = [
    ("2-way, n=10k", 10_000, (3, 4), (0, 1)),
    ("2-way, n=100k", 100_000, (8, 8), (0, 1)),
    ("3-way, n=100k", 100_000, (8, 8, 6), (0, 1, 2)),
    ("2-way of 6, n=1M", 1_000_000, (8, 8, 8, 8, 8, 8), (2, 5)),
]

END_TO_END_SCRIPT = """
import time
import numpy as np
from margsyn.data import AttributeDomain, Dataset
from margsyn.pipeline import run

rng = np.random.default_rng(0)
n = 20000
a = rng.integers(0, 6, size=n)
b = np.where(rng.random(n) < 0.8, a, rng.integers(0, 6, size=n))
c = np.where(rng.random(n) < 0.7, b, rng.integers(0, 6, size=n))
labels = tuple(f"v{i}" for i in range(6))
domains = [AttributeDomain(name, labels) for name in ("a0", "a1", "a2")]
ds = Dataset(domains, np.column_stack([a, b, c]))
start = time.time()
run(ds, 2.0, 1e-6, rng=np.random.default_rng(7))
print(f"{time.time() - start:.3f}")
"""


def best_of(repeat, fn, *args):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(repeat):
    print(f"{'workload':<20} {'op':<16} {'pure':>10} {'compiled':>10} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for label, n, sizes, attrs in WORKLOADS:
        records = np.ascontiguousarray(
            rng.integers(0, np.asarray(sizes), size=(n, len(sizes))),
            dtype=np.int64,
        )
        attrs_arr = np.asarray(attrs, dtype=np.int64)
        sizes_arr = np.asarray([sizes[a] for a in attrs], dtype=np.int64)
        n_cells = int(np.prod(sizes_arr))
        for op in ("cell_codes", "marginal_counts"):
            extra = () if op == "cell_codes" else (np.int64(n_cells),)
            t_pure = best_of(
                repeat, getattr(pure, op), records, attrs_arr, sizes_arr, *extra
            )
            if compiled is None:
                print(f"{label:<20} {op:<16} {t_pure * 1e3:>8.2f}ms {'n/a':>10}")
                continue
            t_fast = best_of(
                repeat, getattr(compiled, op), records, attrs_arr, sizes_arr, *extra
            )
            print(
                f"{label:<20} {op:<16} {t_pure * 1e3:>8.2f}ms "
                f"{t_fast * 1e3:>8.2f}ms {t_pure / t_fast:>7.1f}x"
            )


def bench_end_to_end():
    print("\nend-to-end pipeline (n=20000, 3 attributes, 100 iterations):")
    for label, env_extra in (("compiled", {}), ("pure", {"MARGSYN_PURE": "1"})):
        result = subprocess.run(
            [sys.executable, "-c", END_TO_END_SCRIPT],
            capture_output=True, text=True, check=True,
            env={**os.environ, **env_extra},
        )
        print(f"  {label:<10} {result.stdout.strip()}s")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions per case (best is kept)")
    parser.add_argument("--end-to-end", action="store_true",
                        help="also time a full pipeline run per backend")
    args = parser.parse_args()
    if compiled is None:
        print("note: compiled extension unavailable, showing pure timings only")
    bench_kernels(args.repeat)
    if args.end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
