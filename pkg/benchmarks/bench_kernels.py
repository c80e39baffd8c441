"""Compare the numba and numpy MTTKRP / reconstruction kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are called directly, so the ``CPDKIT_DISABLE_NUMBA`` flag
does not matter here.  The first numba call (JIT compilation or cache
load) is excluded from the timings.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from cpdkit import _kernels

CASES = [
    ((30, 30, 30), 10),
    ((100, 100, 100), 20),
    ((40, 40, 40), 80),
    ((12, 12, 12, 12), 5),
    ((20, 20, 20, 20), 10),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    warm = [rng.random((3, 2)) for _ in range(3)]
    _kernels.mttkrp_numba(rng.random((3, 3, 3)), warm, 1)
    _kernels.reconstruct_numba(np.ones(2), warm)

    header = f"{'shape':>18} {'R':>4} {'kernel':>12} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} {'max diff':>9}"
    print(header)
    print("-" * len(header))
    for shape, R in CASES:
        factors = [rng.random((s, R)) for s in shape]
        w = rng.random(R)
        X = _kernels.reconstruct_numpy(w, factors) + 0.01 * rng.standard_normal(shape)
        for n in (0, len(shape) - 1):
            t_np = best_of(lambda: _kernels.mttkrp_numpy(X, factors, n), args.repeat)
            t_nb = best_of(lambda: _kernels.mttkrp_numba(X, factors, n), args.repeat)
            a = _kernels.mttkrp_numpy(X, factors, n)
            b = _kernels.mttkrp_numba(X, factors, n)
            diff = np.max(np.abs(a - b)) / np.max(np.abs(a))
            print(f"{'x'.join(map(str, shape)):>18} {R:>4} {'mttkrp n=' + str(n):>12} "
                  f"{1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:8.2f} {diff:9.1e}")
        t_np = best_of(lambda: _kernels.reconstruct_numpy(w, factors), args.repeat)
        t_nb = best_of(lambda: _kernels.reconstruct_numba(w, factors), args.repeat)
        a = _kernels.reconstruct_numpy(w, factors)
        b = _kernels.reconstruct_numba(w, factors)
        diff = np.max(np.abs(a - b)) / np.max(np.abs(a))
        print(f"{'x'.join(map(str, shape)):>18} {R:>4} {'reconstruct':>12} "
              f"{1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:8.2f} {diff:9.1e}")


if __name__ == "__main__":
    main()
