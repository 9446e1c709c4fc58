"""Time sparse-graph construction with the numba kernels against the numpy fallback.

    python benchmarks/bench_lasso.py --n 200 --dim 50 --repeat 3

Each backend builds the same leave-one-out sparse graph; the script reports
the best wall time per backend, the speedup and the largest weight
difference between the two graphs.
"""
import argparse
import time

import numpy as np

from sgt._accel import HAVE_NUMBA
from sgt.data import make_blobs, normalize_columns
from sgt.graph import build_sparse_graph
from sgt.lasso import LassoConfig


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=150, help="samples (default 150)")
    p.add_argument("--dim", type=int, default=30, help="feature dimension (default 30)")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--beta", type=float, default=1e-3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if not HAVE_NUMBA:
        p.error("numba is not installed; nothing to compare")

    ds = normalize_columns(make_blobs(args.classes, max(1, args.n // args.classes), args.dim, 8.0, 1.0, args.seed))
    cfg = LassoConfig(beta=args.beta)
    # compile outside the timed region
    build_sparse_graph(normalize_columns(make_blobs(2, 3, 4, 8.0, 1.0)), cfg, backend="numba")

    times, graphs = {}, {}
    for backend in ("numba", "numpy"):
        times[backend], graphs[backend] = best_time(
            lambda: build_sparse_graph(ds, cfg, jobs=args.jobs, backend=backend), args.repeat)
    diff = float(np.abs(graphs["numba"].weights - graphs["numpy"].weights).max())
    print(f"n={ds.n_samples} dim={ds.dim} beta={args.beta} jobs={args.jobs} repeat={args.repeat}")
    for backend, t in times.items():
        print(f"  {backend:6s} {t:8.3f}s")
    print(f"  speedup {times['numpy'] / times['numba']:.2f}x, max |W_numba - W_numpy| = {diff:.2e}")
    return 0 if diff <= 1e-6 else 1


if __name__ == "__main__":
    raise SystemExit(main())
