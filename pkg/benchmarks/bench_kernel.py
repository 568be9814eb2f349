"""Time the compiled rollout kernel against the pure-Python fallback.

    python benchmarks/bench_kernel.py [--horizon 2.0] [--repeat 3]

Each golden scenario runs on both backends; the table reports the best wall
time per backend, the speedup and the largest relative trace difference.
"""
import argparse
import time
from pathlib import Path

import numpy as np

from kincbf import config
from kincbf.sim import available_backends, run

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "kincbf" / "scenarios"


def best_time(sc, backend, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        tr, _ = run(sc, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, tr


def trace_gap(a, b) -> float:
    if a.data.shape != b.data.shape:
        return float("inf")
    x, y = np.nan_to_num(a.data), np.nan_to_num(b.data)
    scale = np.maximum(1.0, np.abs(x).max(axis=0))
    return float((np.abs(x - y) / scale).max())


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--horizon", type=float, default=2.0, help="simulated seconds per run")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    if "compiled" not in available_backends():
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'scenario':<22}{'steps':>7}{'python s':>11}{'compiled s':>12}{'speedup':>9}{'max rel diff':>14}")
    for path in sorted(SCENARIOS.glob("*.yaml")):
        sc = config.load(path).scenario.with_overrides(horizon=args.horizon)
        tp, trp = best_time(sc, "python", args.repeat)
        tc, trc = best_time(sc, "compiled", args.repeat)
        print(f"{sc.name:<22}{sc.n_steps:>7}{tp:>11.3f}{tc:>12.4f}{tp / tc:>9.1f}{trace_gap(trp, trc):>14.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
