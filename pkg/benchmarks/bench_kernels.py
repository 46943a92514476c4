"""Time the numba and numpy kernel backends on the pipeline's hot loops.

    python benchmarks/bench_kernels.py [--planets 10] [--repeat 3]

Each kernel runs once untimed (numba compiles on first call), then the
best of ``--repeat`` runs is reported. Outputs of the two backends are
compared for bit equality along the way.
"""
import argparse
import time

import numpy as np

from safetycage._backend import NUMBA_AVAILABLE
from safetycage.dataset import iter_synthetic_planets
from safetycage.encode import EncodingConfig, radius_features
from safetycage.iforest import iforest_fit


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--planets", type=int, default=10, help="planets to encode")
    ap.add_argument("--rows", type=int, default=2000, help="rows for the forest benchmarks")
    ap.add_argument("--dim", type=int, default=30, help="columns for the forest benchmarks")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["numba"] if NUMBA_AVAILABLE else [])
    flux = np.stack([f for _, f in iter_synthetic_planets(args.planets, 300, 0)])
    flux = flux.reshape(-1, *flux.shape[2:])  # (planets * spots, noise, C, L)
    cfg = EncodingConfig()
    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.rows, args.dim))
    Q = rng.normal(size=(args.rows, args.dim))
    forest = iforest_fit(X, seed=1, backend="numpy")

    cases = {
        f"encode {flux.shape[0]} samples": lambda b: radius_features(flux, 150, cfg, b),
        f"iforest fit {args.rows}x{args.dim}": lambda b: iforest_fit(X, seed=1, backend=b).threshold,
        f"iforest score {args.rows}x{args.dim}":
            lambda b: forest.decision_function(Q, b),
    }
    print(f"{'case':<28}" + "".join(f"{b:>12}" for b in backends) + "     speedup  identical")
    for name, fn in cases.items():
        results = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        row = f"{name:<28}" + "".join(f"{results[b][0]:>11.4f}s" for b in backends)
        if len(backends) == 2:
            speedup = results["numpy"][0] / results["numba"][0]
            same = np.array_equal(results["numpy"][1], results["numba"][1])
            row += f"  {speedup:>9.1f}x  {same}"
        print(row)


if __name__ == "__main__":
    main()
