"""Micro-benchmark comparing the numba and numpy kernel paths.

Usage: python -m picardopt.bench [--repeat N] [--csv out.csv]

Warms the JIT first so compile time is excluded, then times each kernel under
both paths and prints the speedup.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import kernels


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def _workloads():
    rng = np.random.default_rng(0)
    d = 100_000
    values = rng.standard_normal(d)
    m1 = rng.standard_normal(d)
    m2 = np.abs(rng.standard_normal(d))
    g = rng.standard_normal(d)
    x = rng.standard_normal(d)
    points = rng.uniform(0.1, 0.9, size=(64, 4))
    points[:, 2] = np.log(0.2)
    grid = (np.arange(16) + 0.5) / 16
    target = np.zeros((16, 16))
    return [
        ("adam_apply[100k]", lambda: kernels.adam_apply(values, m1, m2, g, 3, 0.9, 0.999, 1e-8, 0.01)),
        ("rosenbrock_grad[100k]", lambda: kernels.rosenbrock_grad(x)),
        ("splat_loss_grad[64pts]", lambda: kernels.splat_loss_grad(points, grid, grid, target)),
        ("splat_field[64pts]", lambda: kernels.splat_field(points, grid, grid)),
    ]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--csv", default=None)
    args = parser.parse_args(argv)

    paths = kernels.available_paths()
    if "numba" not in paths:
        print("numba unavailable; only the numpy path can be timed", file=sys.stderr)

    rows = []
    restore = kernels.kernel_path()
    try:
        for name, fn in _workloads():
            timings = {}
            for path in paths:
                kernels.set_kernel_path(path)
                fn()  # warm (JIT compile on first numba call)
                timings[path] = _time(fn, args.repeat)
            speedup = timings["numpy"] / timings["numba"] if "numba" in timings else float("nan")
            rows.append((name, timings.get("numpy"), timings.get("numba"), speedup))
    finally:
        kernels.set_kernel_path(restore)

    header = f"{'kernel':<24} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, t_np, t_nb, s in rows:
        nb = f"{t_nb:10.4f}" if t_nb is not None else "       n/a"
        sp = f"{s:8.2f}" if s == s else "     n/a"
        print(f"{name:<24} {t_np:10.4f} {nb} {sp}")

    if args.csv:
        with open(args.csv, "w") as f:
            f.write("kernel,numpy_ms,numba_ms,speedup\n")
            for name, t_np, t_nb, s in rows:
                f.write(f"{name},{t_np!r},{t_nb!r},{s!r}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
