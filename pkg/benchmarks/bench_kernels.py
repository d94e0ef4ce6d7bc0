"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--sizes 50,100,200] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from desing import _core_py

try:
    from desing import _core
except ImportError:  # pragma: no cover
    _core = None


def knn_weights(n, rng, k=8):
    pts = rng.uniform(size=(n, 2))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    w = np.full((n, n), np.inf)
    order = np.argsort(d, axis=1)[:, : k + 1]
    for i, row in enumerate(order):
        w[i, row] = d[i, row]
        w[row, i] = d[i, row]
    return w


def metric(n, rng):
    pts = rng.uniform(size=(n, 2))
    return np.linalg.norm(pts[:, None] - pts[None], axis=2)


def bench(label, fn, repeat):
    return label, min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="50,100,200")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = [("python", _core_py)] + ([("compiled", _core)] if _core else [])
    print(f"{'kernel':<28}{'n':>6}" + "".join(f"{b:>12}" for b, _ in backends) + f"{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        w = knn_weights(n, rng)
        da, db = metric(n, rng), metric(n, rng)
        idx = np.arange(n, dtype=np.int_)
        small_a, small_b = metric(4, rng), metric(4, rng)
        cases = [
            ("floyd_warshall", lambda m: m.floyd_warshall(w.copy())),
            ("correspondence_distortion", lambda m: m.correspondence_distortion(da, db, idx, idx)),
            ("pair_distortion x n", lambda m: [m.pair_distortion(da, db, idx, idx, i, i)
                                               for i in range(n)]),
            ("correspondence_feasible 4x4", lambda m: m.correspondence_feasible(small_a, small_b, 0.2)),
        ]
        for name, call in cases:
            times = [bench(b, lambda m=mod: call(m), args.repeat)[1] for b, mod in backends]
            speed = f"{times[0] / times[-1]:>9.1f}x" if len(times) > 1 else ""
            print(f"{name:<28}{n:>6}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
