"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_backends.py [--repeat 3] [--scale 1]

Each workload runs once per backend to warm up (numba compiles on first
call), then ``--repeat`` timed runs; the best time is reported together with
the largest difference between the two backends' results.
"""

import argparse
import time

import numpy as np

from oscmax import funcs, kernels
from oscmax import operators as ops
from oscmax.grid import Box, GridFunction


def smooth(res, seed=0):
    dom = Box([0.0] * len(res), [1.0] * len(res))
    return GridFunction(dom, funcs.random_smooth_values(dom, res, seed))


def workloads(scale):
    n2 = 24 * scale
    n3 = 10 * scale
    f2 = smooth((n2, n2))
    f3 = smooth((n3, n3, n3), 1)
    rect = {"kind": "rectangles"}
    cyl = {"kind": "cylinders"}
    return [
        (f"bmo p=1, rectangles {n2}^2", lambda: ops.bmo_norm(f2, rect, 1.0).value),
        (f"blo, rectangles {n2}^2", lambda: ops.blo_norm(f2, rect).value),
        (f"maximal, rectangles {n2}^2", lambda: ops.maximal(f2, rect).values),
        (f"rec_bmo, {n2}^2", lambda: ops.rec_bmo(f2, (1, 1), rect).value),
        (f"rec_blo, {n2}^2", lambda: ops.rec_blo(f2, (1, 1), rect).value),
        (f"bmo p=1, cylinders {n3}^3", lambda: ops.bmo_norm(f3, cyl, 1.0).value),
        (f"maximal, cylinders {n3}^3", lambda: ops.maximal(f3, cyl).values),
    ]


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), np.asarray(out, dtype=float)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=int, default=1, help="multiply grid sizes by this factor")
    args = ap.parse_args()

    print(f"{'workload':34s} {'numba s':>9s} {'numpy s':>9s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, fn in workloads(args.scale):
        res = {}
        for backend in ("numba", "numpy"):
            with kernels.use_backend(backend):
                fn()  # warm up
                res[backend] = best_of(fn, args.repeat)
        (tn, a), (tp, b) = res["numba"], res["numpy"]
        diff = float(np.max(np.abs(a - b)))
        print(f"{name:34s} {tn:9.4f} {tp:9.4f} {tp / tn:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
