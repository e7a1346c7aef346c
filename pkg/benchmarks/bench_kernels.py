"""Time the numba and numpy substep kernels on identical inputs.

    python3 benchmarks/bench_kernels.py --paths 500 --K 16384 --p 1.5 --m 1
"""
import argparse
import time

import numpy as np

from stochtree import _kernels
from stochtree.montecarlo import _word_program, prefix_closure, wiener_increments
from stochtree.words import Calculus, hierarchical_set


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=500)
    ap.add_argument("--K", type=int, default=16384)
    ap.add_argument("--p", default="1.5")
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--calculus", default="ito")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    calculus = Calculus.of(args.calculus)
    h = 2.0**-8
    words = prefix_closure(hierarchical_set(args.p, args.m))
    parent, grand, letter, corr = _word_program(words, calculus)
    inc = wiener_increments(args.m, h, args.K, seed=0, paths=range(args.paths))
    dt = h / args.K

    print(f"{args.paths} paths x {args.K} substeps, {len(words)} words ({calculus.value})")
    t_np, ref = best_of(lambda: _kernels.accumulate(inc, dt, parent, grand, letter, corr, backend="numpy"), args.repeat)
    print(f"numpy  {t_np:8.3f} s")
    if not _kernels.HAVE_NUMBA:
        print("numba  unavailable (not installed or STOCHTREE_DISABLE_NUMBA set)")
        return
    _kernels.accumulate(inc[:1, :8], dt, parent, grand, letter, corr, backend="numba")  # compile
    t_nb, out = best_of(lambda: _kernels.accumulate(inc, dt, parent, grand, letter, corr, backend="numba"), args.repeat)
    print(f"numba  {t_nb:8.3f} s   speedup {t_np / t_nb:5.2f}x   max |diff| {np.max(np.abs(out - ref)):.2e}")


if __name__ == "__main__":
    main()
