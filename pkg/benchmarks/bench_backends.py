"""Compare the numba and numpy forest kernels on identical workloads.

Fits and queries forests of increasing size under each backend, reporting
median wall time and the speedup ratio, and verifies on every size that the
two backends produce bit-identical forests and predictions (the package's
core cross-backend guarantee).

Usage: python benchmarks/bench_backends.py [--trees 100] [--repeats 5]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

import dgal._backend as backend_mod
from dgal.forest import Forest, ForestConfig


def make_data(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = ((X[:, 0] + 0.5 * X[:, 1] + 0.2 * rng.standard_normal(n)) > 0).astype(np.int64)
    y += 2 * (X[:, 2] > 0.3)  # 4 classes
    return X, y


def timed(fn, repeats):
    fn()  # warmup: triggers jit compilation on the numba path
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


def bench_case(n, d, cfg, repeats):
    X, y = make_data(n, d, seed=42)
    Xq, _ = make_data(max(n // 2, 100), d, seed=43)
    results = {}
    for backend in ("numpy", "numba"):
        backend_mod.BACKEND = backend
        forest, fit_t = timed(lambda: Forest.fit(X, y, cfg), repeats)
        proba, pred_t = timed(lambda: forest.predict_proba(Xq), repeats)
        results[backend] = (forest, proba, fit_t, pred_t)

    fa, pa, *_ = results["numpy"]
    fb, pb, *_ = results["numba"]
    identical = (
        np.array_equal(fa.feature, fb.feature)
        and np.array_equal(fa.threshold, fb.threshold)
        and np.array_equal(pa, pb)
    )
    return results, identical


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    if not backend_mod.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'n':>6} {'d':>4} | {'numpy fit':>10} {'numba fit':>10} {'ratio':>6} | "
          f"{'numpy pred':>10} {'numba pred':>10} {'ratio':>6} | identical")
    for n, d in [(200, 8), (1000, 16), (4000, 16), (4000, 64)]:
        cfg = ForestConfig(n_trees=args.trees, seed=7)
        results, identical = bench_case(n, d, cfg, args.repeats)
        _, _, np_fit, np_pred = results["numpy"]
        _, _, nb_fit, nb_pred = results["numba"]
        print(
            f"{n:>6} {d:>4} | {np_fit:>9.3f}s {nb_fit:>9.3f}s {np_fit / nb_fit:>5.1f}x | "
            f"{np_pred:>9.4f}s {nb_pred:>9.4f}s {np_pred / nb_pred:>5.1f}x | {identical}"
        )
        if not identical:
            raise SystemExit("backends diverged; this is a bug")


if __name__ == "__main__":
    main()
