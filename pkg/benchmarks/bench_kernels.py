#!/usr/bin/env python3
"""Time the compiled and pure-numpy capture kernels on the same workload.

    python benchmarks/bench_kernels.py [--pixels 16384] [--frames 256] [--repeat 3]

Also confirms the two backends return identical bits.
"""

import argparse
import sys
import time

import numpy as np

from qisim import _kernels


def bench(fn, repeat, *args, **kw):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pixels", type=int, default=16384)
    ap.add_argument("--frames", type=int, default=256)
    ap.add_argument("--theta", type=float, default=8.0, help="total exposure per pixel")
    ap.add_argument("--sigma", type=float, default=0.19)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    per_frame = np.full(args.pixels, args.theta / args.frames)
    p0 = np.exp(-per_frame)
    backends = _kernels.available_backends()
    print(f"pixels={args.pixels} frames={args.frames} theta={args.theta} "
          f"sigma={args.sigma} threads={args.threads}")
    results = {}
    for name in backends:
        k = _kernels.get_backend(name)
        for kernel in ("threshold_frames", "count_ones"):
            t, out = bench(getattr(k, kernel), args.repeat, per_frame, p0, args.sigma, 0.5,
                           1234, args.frames, num_threads=args.threads)
            draws = args.pixels * args.frames
            print(f"{name:8s} {kernel:17s} {t:8.3f} s  {draws / t / 1e6:8.2f} Mdraw/s")
            results[(name, kernel)] = (t, out)
    if len(backends) > 1:
        a, b = "cython", "python"
        for kernel in ("threshold_frames", "count_ones"):
            same = np.array_equal(results[(a, kernel)][1], results[(b, kernel)][1])
            ratio = results[(b, kernel)][0] / results[(a, kernel)][0]
            print(f"{kernel}: identical={same}, {a} is {ratio:.1f}x faster than {b}")
            if not same:
                return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
