"""Benchmark the compiled kernel backend against the numpy fallback.

Times the kernel table build and the table apply on a few grid sizes and
reports the speedup plus the worst relative disagreement between the two
backends (summation order differs, so agreement is relative, not bitwise).

Usage: python3 benchmarks/benchmark_kernel.py [--sizes 32,48,64,96]
                                              [--repeats 5]
"""

import argparse
import time

import numpy as np

from gsqgpatch import kernel as kernelmod
from gsqgpatch.geometry import build_grid
from gsqgpatch.kernel import KernelParams, build_kernel_table


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(n_r, n_theta, repeats, rng):
    grid = build_grid(3, n_r, n_theta)
    params = KernelParams(0.5, 3)
    om = rng.random(grid.shape)

    t_build_np, blk_np = best_of(
        lambda: kernelmod._table_block_numpy(grid, params), repeats)
    table = build_kernel_table(grid, params)
    t_apply_np, out_np = best_of(
        lambda: kernelmod._apply_block_numpy(table.block, om, grid.n_theta),
        repeats)

    if kernelmod._kernels is None:
        print("%4dx%-4d  build %8.1f ms  apply %8.2f ms   "
              "(compiled backend not built)"
              % (n_r, n_theta, 1e3 * t_build_np, 1e3 * t_apply_np))
        return

    t_build_c, blk_c = best_of(
        lambda: kernelmod._kernels.table_block(
            params.s, params.c_s, params.n_folds, grid.r, grid.dr,
            grid.dtheta, grid.n_theta, kernelmod.num_threads()), repeats)
    t_apply_c, out_c = best_of(lambda: table.apply(om), repeats)

    # both raw builders leave a placeholder in the (i, i, 0-offset) slot;
    # the table constructor overwrites it with the exact self integral, so
    # exclude it when comparing the raw builds
    diag = np.arange(grid.n_r)
    blk_c = blk_c.copy()
    blk_np = blk_np.copy()
    blk_np[diag, diag, grid.n_theta - 1] = 0.0
    blk_c[diag, diag, grid.n_theta - 1] = 0.0
    dev_blk = float(np.max(np.abs(blk_np - blk_c)
                           / np.maximum(np.abs(blk_np), 1e-300)))
    dev_ap = float(np.max(np.abs(out_np - out_c)
                          / np.maximum(np.abs(out_np), 1e-300)))
    print("%4dx%-4d  build %8.1f / %7.1f ms (x%5.1f)   "
          "apply %8.2f / %7.2f ms (x%5.1f)   dev %7.1e / %7.1e"
          % (n_r, n_theta,
             1e3 * t_build_np, 1e3 * t_build_c, t_build_np / t_build_c,
             1e3 * t_apply_np, 1e3 * t_apply_c, t_apply_np / t_apply_c,
             dev_blk, dev_ap))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="32,48,64,96",
                    help="comma-separated n_r values; n_theta = n_r - 1")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    sizes = [int(tok) for tok in args.sizes.split(",")]
    rng = np.random.default_rng(0)
    backend = "compiled + numpy" if kernelmod._kernels is not None \
        else "numpy only"
    print("kernel backend: %s, %d worker threads"
          % (backend, kernelmod.num_threads()))
    print("grid        table build numpy/compiled      "
          "apply numpy/compiled              max rel dev blk/apply")
    for n_r in sizes:
        run(n_r, n_r - 1, args.repeats, rng)


if __name__ == "__main__":
    main()
