#!/usr/bin/env python3
"""Timing comparison of the compiled stencil/interp kernels vs the numpy path.

Run from the repository root:

    python3 benchmarks/bench_backends.py

The compiled extension must be built (pip install -e . --no-build-isolation);
the numpy numbers come from calling the reference kernels directly, so both
paths run in one process.
"""

import time

import numpy as np

from affinelap import GridSpec, backend, _kernels_np


def timeit(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_stencil(shape):
    rng = np.random.default_rng(0)
    vals = rng.standard_normal(shape)
    n = len(shape)
    q = rng.standard_normal((n, n))
    coeff = q @ q.T + np.eye(n)
    spacing = np.full(n, 0.01)
    t_np = timeit(_kernels_np.apply_quadratic_stencil, vals, coeff, spacing)
    t_co = timeit(backend.apply_quadratic_stencil, vals, coeff, spacing)
    return t_np, t_co


def bench_interp(shape):
    rng = np.random.default_rng(1)
    src = rng.standard_normal(shape)
    n = len(shape)
    m = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    tr = rng.standard_normal(n) * 0.1
    origin = -np.ones(n)
    spacing = 2.0 / (np.asarray(shape) - 1)
    target = GridSpec(n, shape, tuple(spacing), tuple(origin))
    t_np = timeit(_kernels_np.interp_affine, src, m, tr, origin, spacing,
                  target.axes())
    t_co = timeit(backend.interp_affine, src, m, tr, origin, spacing, target)
    return t_np, t_co


def main():
    if not backend.USE_COMPILED:
        print("compiled backend not active; build the extension first "
              "(AFFINELAP_PURE unset).")
    rows = []
    for shape in [(513, 513), (129, 129, 129)]:
        t_np, t_co = bench_stencil(shape)
        rows.append(("stencil apply", shape, t_np, t_co))
        t_np, t_co = bench_interp(shape)
        rows.append(("affine interp", shape, t_np, t_co))
    print(f"{'kernel':<14} {'shape':<17} {'numpy [ms]':>11} {'compiled [ms]':>14} {'speedup':>8}")
    for name, shape, t_np, t_co in rows:
        print(f"{name:<14} {str(shape):<17} {t_np * 1e3:>11.2f} {t_co * 1e3:>14.2f} "
              f"{t_np / t_co:>8.2f}")


if __name__ == "__main__":
    main()
