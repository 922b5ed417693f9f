"""Benchmark the compiled kernels against the numpy fallback.

Run: python benchmarks/bench_backends.py

Times each hot kernel on workload sizes representative of the simulator,
the voting baseline, and triplet training, for whichever backends are
importable. Matrix-multiply-bound parts of training (the MLP stacks) run
through BLAS in both cases and are not benchmarked here.
"""

import importlib
import timeit

import numpy as np

from sspe._kernels import _pure

try:
    _native = importlib.import_module("sspe._kernels._native")
except ImportError:
    _native = None


def make_workloads(rng):
    hull = np.array([[10.0, 5.0], [150.0, 20.0], [180.0, 120.0], [90.0, 170.0], [15.0, 110.0]])
    m, H, F, D = 200, 128, 900, 128
    pts = rng.uniform(0, 200, (m, 2))
    dirs = rng.standard_normal((m, 2))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    hyps = rng.uniform(0, 200, (H, 2))
    feats = rng.standard_normal((F, D))
    pos = rng.integers(0, F, F).astype(np.int64)
    neg = rng.integers(0, F, F).astype(np.int64)
    first = rng.integers(0, m, H)
    second = (first + 1 + rng.integers(0, m - 1, H)) % m
    return {
        "hull_lattice_mask (200x170 px)": lambda k: k.hull_lattice_mask(hull, 0, 0, 200, 170),
        "batch_line_intersections (H=128)": lambda k: k.batch_line_intersections(
            np.ascontiguousarray(pts[first]), np.ascontiguousarray(dirs[first]),
            np.ascontiguousarray(pts[second]), np.ascontiguousarray(dirs[second])),
        "hypothesis_inlier_counts (128x200)": lambda k: k.hypothesis_inlier_counts(
            pts, dirs, hyps, 0.999),
        "triplet_terms (F=900, D=128)": lambda k: k.triplet_terms(feats, pos, neg, 0.1),
        "triplet_grad (F=900, D=128)": lambda k: k.triplet_grad(feats, pos, neg, 0.1, 1.0),
    }


def bench(fn, repeat=5, number=20):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    rng = np.random.default_rng(0)
    work = make_workloads(rng)
    backends = [("pure", _pure)] + ([("native", _native)] if _native else [])
    print(f"{'kernel':<38}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for label, call in work.items():
        times = [bench(lambda k=k: call(k)) for _, k in backends]
        cells = "".join(f"{t * 1e6:>10.1f}us" for t in times)
        speed = f"{times[0] / times[-1]:>9.1f}x" if len(times) > 1 else "       n/a"
        print(f"{label:<38}{cells}{speed}")
    if _native is None:
        print("\ncompiled backend not built; install with Cython + a C compiler to compare")


if __name__ == "__main__":
    main()
