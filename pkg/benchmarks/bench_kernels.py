#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Two hot paths are timed: the ordered scatter-add inside truncated-series
convolution (exercised through a realistic product workload) and the
quadratic bracket sweep behind the amplitude constant.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from hadalab import kernels
from hadalab.series import conv_table


def time_it(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_seg_add(backend, repeat):
    rng = np.random.default_rng(0)
    # d = 2, order 12 matvec workload over a 512-point grid
    tab = conv_table(2, 12, 12, 12)
    P = tab.I.size
    prod = np.ascontiguousarray(
        rng.standard_normal((P, 512 * 2)) + 1j * rng.standard_normal((P, 512 * 2)))
    out = np.zeros((tab.n_out, prod.shape[1]), dtype=np.complex128)

    def run():
        out[:] = 0
        backend.seg_add(tab.T, prod, out)

    return time_it(run, repeat), P


def bench_bracket(backend, repeat, k_max=4000):
    return time_it(lambda: backend.square_bracket_sweep(k_max), repeat)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = {}
    backends["python"] = kernels.get_backend("python")
    try:
        backends["compiled"] = kernels.get_backend("compiled")
    except ImportError:
        print("compiled backend not available; run pip install -e . first")

    print(f"active backend: {kernels.backend_name()}\n")
    rows = {}
    for name, be in backends.items():
        t_seg, pairs = bench_seg_add(be, args.repeat)
        t_br = bench_bracket(be, args.repeat)
        rows[name] = (t_seg, t_br)
        print(f"{name:>9}: seg_add({pairs} pairs x 1024 lanes) "
              f"{1e3 * t_seg:8.2f} ms | bracket sweep (k<=4000) "
              f"{1e3 * t_br:8.2f} ms")
    if len(rows) == 2:
        s = rows["python"][0] / rows["compiled"][0]
        b = rows["python"][1] / rows["compiled"][1]
        print(f"\nspeedup: seg_add x{s:.1f}, bracket sweep x{b:.1f}")


if __name__ == "__main__":
    main()
