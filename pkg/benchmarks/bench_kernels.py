"""Compiled vs pure-Python kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]

Each kernel runs on identical inputs under both backends; outputs are
checked for exact equality before timings are reported.
"""

import argparse
import time

import numpy as np

from cltlab import kernels
from cltlab.billiard import BilliardGeometry, collision_batch, sample_srb
from cltlab.rng import generator


def _cases(scale):
    rng = generator(1)
    m = max(1, int(2000 * scale))
    words = rng.integers(0, 2**63, size=(m, 6), dtype=np.uint64) * np.uint64(2)
    lattice = rng.integers(0, 2**63, size=(2, m), dtype=np.uint64)
    geom = BilliardGeometry((((0.0, 0.0), 0.4), ((0.5, 0.5), 0.2)))
    X = sample_srb(geom, rng, max(1, int(20_000 * scale)))
    return {
        "doubling_orbit (2000 x 256)": lambda: kernels.doubling_orbit(words, 256),
        "toral_orbit (2000 x 256)": lambda: kernels.toral_orbit(lattice[0], lattice[1], 2, 1, 1, 1, 256),
        "trace_rays (20000 rays)": lambda: collision_batch(geom, X),
    }


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if hasattr(a, "__dict__") and not isinstance(a, np.ndarray):
        return _same(tuple(vars(a).values()), tuple(vars(b).values()))
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args(argv)
    if "compiled" not in kernels.available_backends():
        raise SystemExit("compiled extension not built; reinstall with Cython available")
    previous = kernels.backend_name()
    print(f"{'kernel':32s} {'python [s]':>11s} {'compiled [s]':>13s} {'speedup':>8s}  equal")
    try:
        for name, fn in _cases(args.scale).items():
            kernels.use_backend("python")
            tp, op = _time(fn, args.repeat)
            kernels.use_backend("compiled")
            tc, oc = _time(fn, args.repeat)
            print(f"{name:32s} {tp:11.4f} {tc:13.4f} {tp / tc:8.1f}x  {_same(op, oc)}")
    finally:
        kernels.use_backend(previous)


if __name__ == "__main__":
    main()
