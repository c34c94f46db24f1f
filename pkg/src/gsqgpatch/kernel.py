"""Riesz constant, folded interaction kernel, and its dense grid operator.

The fractional Laplacian (-Delta)^s on the plane has fundamental solution
k_s(x) = c_s |x|^{-2(1-s)} with c_s = Gamma(1-s) / (2^{2s} pi Gamma(s)).
For N-fold symmetric fields carried on one sector fold S, the induced
interaction kernel between polar points (r, theta) and (r', theta') is

    kappa_s(r, r', xi) = sum_{n=0}^{N-1} c_s
        / (r^2 + r'^2 - 2 r r' cos(xi - 2 pi n/N))^{1-s},  xi = theta - theta',

one term per rotated image of the source point.  The discrete operator is

    (K_s om)(node) = sum_{node'} T[node, node'] * om(node'),

with midpoint quadrature T = kappa_s * w', except on the exact diagonal
where the n = 0 image is singular; there the n = 0 contribution is the exact
integral of k_s over the disk with the same area as the cell,

    int_{B(0,h)} c_s |x|^{2s-2} dx = c_s pi h^{2s} / s,   h = sqrt(w_cell/pi),

which captures the leading singularity exactly and keeps every entry
positive.  Entries depend only on (r_i, r_i', theta_j - theta_j'), so the
table is stored as an (n_r, n_r, 2*n_theta - 1) block over signed angular
offsets instead of the full (n, n) matrix; dense() materializes the matrix
for small verification grids.  A compiled extension supplies the table build
and the operator apply; a pure numpy fallback is used when it is missing.
"""

import math
import os

import numpy as np

try:
    from . import _kernels
except ImportError:
    _kernels = None

# dense-table node cap: keeps the O(n^2) apply around 2.6e8 multiply-adds
MAX_TABLE_NODES = 128 * 127
# dense() materialization cap (testing aid, (n x n) float64)
MAX_DENSE_NODES = 4096


def num_threads():
    """Worker count for the compiled kernels; GSQG_THREADS caps it."""
    env = os.environ.get("GSQG_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def riesz_constant(s):
    """c_s = Gamma(1-s) / (2^{2s} pi Gamma(s)) for 0 < s < 1."""
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0,1)")
    return math.gamma(1.0 - s) / (2.0 ** (2.0 * s) * math.pi * math.gamma(s))


class KernelParams:
    """Exponent s, fold count N, and the Riesz constant c_s."""

    def __init__(self, s, n_folds):
        if int(n_folds) != n_folds or n_folds < 2:
            raise ValueError("n_folds must be an integer >= 2")
        self.s = float(s)
        self.n_folds = int(n_folds)
        self.c_s = riesz_constant(self.s)

    def __repr__(self):
        return "KernelParams(s=%g, n_folds=%d)" % (self.s, self.n_folds)


def kappa(params, r, r_prime, xi):
    """Folded kernel kappa_s(r, r', xi); rejects singular configurations.

    Singular means some image distance vanishes (r = r' and xi = 2 pi n/N);
    the diagonal of the discrete table uses self_cell_weight instead.
    """
    r = np.asarray(r, dtype=float)
    rp = np.asarray(r_prime, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(r <= 0.0) or np.any(rp <= 0.0):
        raise ValueError("radii must be positive")
    total = 0.0
    for n in range(params.n_folds):
        d2 = r * r + rp * rp - 2.0 * r * rp * np.cos(
            xi - 2.0 * math.pi * n / params.n_folds)
        if np.any(d2 < 1e-30):
            raise ValueError(
                "singular kernel configuration (r = r', xi = 2 pi n/N); "
                "use self_cell_weight for the diagonal")
        total = total + d2 ** (params.s - 1.0)
    out = params.c_s * total
    return float(out) if out.ndim == 0 else out


def self_cell_weight(params, cell_area):
    """Exact integral of c_s |x|^{2s-2} over the equal-area disk B(0, h).

    h = sqrt(cell_area/pi); the value c_s pi h^{2s} / s is the diagonal
    contribution of the n = 0 image per unit source density.
    """
    if cell_area <= 0.0:
        raise ValueError("cell_area must be positive")
    h = math.sqrt(cell_area / math.pi)
    return params.c_s * math.pi * h ** (2.0 * params.s) / params.s


def _fold_image_sum_at_zero(params, r):
    """sum_{n>=1} c_s / (2 r^2 (1 - cos(2 pi n/N)))^{1-s}: the regular part
    of kappa at r = r', xi = 0 (distances 2 r sin(pi n/N))."""
    r = np.asarray(r, dtype=float)
    total = np.zeros_like(r)
    for n in range(1, params.n_folds):
        d2 = 2.0 * r * r * (1.0 - math.cos(2.0 * math.pi * n / params.n_folds))
        total += d2 ** (params.s - 1.0)
    return params.c_s * total


def _table_block_numpy(grid, params):
    nr, nt = grid.n_r, grid.n_theta
    offs = grid.dtheta * (np.arange(2 * nt - 1) - (nt - 1))
    r = grid.r
    r2 = r * r
    rr_outer = np.outer(r, r)
    blk = np.zeros((nr, nr, offs.size))
    diag = np.arange(nr)
    for n in range(params.n_folds):
        ang = offs - 2.0 * math.pi * n / params.n_folds
        d2 = (r2[:, None, None] + r2[None, :, None]
              - 2.0 * rr_outer[:, :, None] * np.cos(ang)[None, None, :])
        if n == 0:
            d2[diag, diag, nt - 1] = 1.0  # singular; overwritten below
        blk += d2 ** (params.s - 1.0)
    blk *= params.c_s
    blk *= grid.w_r[None, :, None]
    return blk


def _apply_block_numpy(block, omega, n_theta):
    omf = omega[:, ::-1]
    win = np.lib.stride_tricks.sliding_window_view(block, n_theta, axis=2)
    # win[a, b, j, q] = block[a, b, j + q]; with q = nt-1-j' this sums
    # block[a, b, (j - j') + nt - 1] * om[b, j'] over sources (b, j').
    # optimize=False keeps einsum from materializing the windowed copy.
    return np.einsum("abjq,bq->aj", win, omf, optimize=False)


class KernelTable:
    """Compact dense operator: block[i, i', k] = entry at angular offset
    (k - (n_theta-1)) * dtheta, including the source-side weight."""

    def __init__(self, grid, params, block):
        self.grid = grid
        self.params = params
        self.block = block

    def apply(self, omega):
        """(K_s om)(node) = sum_{node'} T[node, node'] om(node')."""
        omega = np.asarray(omega, dtype=float)
        if omega.shape != self.grid.shape:
            raise ValueError("field shape %s does not match grid %s"
                             % (omega.shape, self.grid.shape))
        if _kernels is not None:
            return _kernels.apply_block(self.block, np.ascontiguousarray(omega),
                                        num_threads())
        return _apply_block_numpy(self.block, omega, self.grid.n_theta)

    def dense(self):
        """Full (n, n) matrix over flattened node indices, for small grids."""
        nr, nt = self.grid.shape
        n = nr * nt
        if n > MAX_DENSE_NODES:
            raise ValueError("dense() is limited to %d nodes, got %d"
                             % (MAX_DENSE_NODES, n))
        idx = (np.arange(nt)[:, None] - np.arange(nt)[None, :]) + nt - 1
        t4 = self.block[:, :, idx]              # (nr, nr, nt, nt)
        return np.ascontiguousarray(
            t4.transpose(0, 2, 1, 3).reshape(n, n))


def build_kernel_table(grid, params):
    """Dense folded-kernel table with the desingularized diagonal."""
    if grid.n_folds != params.n_folds:
        raise ValueError("grid has n_folds=%d but params has n_folds=%d"
                         % (grid.n_folds, params.n_folds))
    if grid.n_nodes > MAX_TABLE_NODES:
        raise ValueError("grid has %d nodes, above the dense-table cap %d"
                         % (grid.n_nodes, MAX_TABLE_NODES))
    if _kernels is not None:
        blk = _kernels.table_block(params.s, params.c_s, params.n_folds,
                                   grid.r, grid.dr, grid.dtheta, grid.n_theta,
                                   num_threads())
    else:
        blk = _table_block_numpy(grid, params)
    # exact diagonal: equal-area self integral plus the regular n >= 1 images
    diag = np.arange(grid.n_r)
    h2s = (grid.w_r / math.pi) ** params.s
    self_int = params.c_s * math.pi * h2s / params.s
    blk[diag, diag, grid.n_theta - 1] = (
        self_int + _fold_image_sum_at_zero(params, grid.r) * grid.w_r)
    return KernelTable(grid, params, blk)


def apply_Ks(table, omega):
    """Operator form of the table; omega must be nonnegative."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0.0):
        raise ValueError("omega must be nonnegative")
    return table.apply(omega)
