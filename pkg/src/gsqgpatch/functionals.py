"""Scalar functionals: energy, penalized energy, localized energies, mass.

The sector energy is the quadratic form

    E_s(om) = (N/2) sum_{x, x'} om(x) T[x, x'] om(x') w(x),

with the folded kernel table T (which already carries the source-side
weight).  The penalized variant subtracts (lam*N/p) * int (om/lam)^p.

The localized energies I_s(om, X, X') use the unfolded single-distance
kernel (eps/|x - x'|)^{2(1-s)} between Cartesian positions of the fold's own
nodes (no rotated images), with the equal-area diagonal rule rescaled by
eps^{2(1-s)}:

    I_s(om, X, X') = sum_{x in X, x' in X'} om om' w w' (eps/|x-x'|)^{2(1-s)}
                     + sum_{x in X and X'} om^2 w eps^{2(1-s)} pi h^{2s} / s.

The self-interaction constant of the unit disk,

    I_s(disk) = (1/pi^2) int int_{B(0,1)^2} |x - x'|^{-2(1-s)} dx dx',

is estimated by Monte Carlo with a deterministic seed; elementary bounds put
s * I_s(disk) between 1/6 and 1, which is the correctness guard.
"""

import math

import numpy as np

from .geometry import integrate

_PAIR_CHUNK = 512


class Region:
    """Boolean node mask standing for a measurable set intersected with S."""

    def __init__(self, grid, mask):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != grid.shape:
            raise ValueError("mask shape %s does not match grid %s"
                             % (mask.shape, grid.shape))
        self.grid = grid
        self.mask = mask

    def complement(self):
        return Region(self.grid, ~self.mask)

    def union(self, other):
        return Region(self.grid, self.mask | other.mask)

    def intersect(self, other):
        return Region(self.grid, self.mask & other.mask)


def region_all(grid):
    return Region(grid, np.ones(grid.shape, dtype=bool))


def region_empty(grid):
    return Region(grid, np.zeros(grid.shape, dtype=bool))


def region_ball(grid, center_xy, radius):
    cx, cy = center_xy
    d2 = (grid.xx - cx) ** 2 + (grid.yy - cy) ** 2
    return Region(grid, d2 <= radius * radius)


def region_band(grid, r_a, r_b):
    return Region(grid, (grid.rr >= r_a) & (grid.rr <= r_b))


def energy(table, omega):
    """E_s(om) = (N/2) * sum w * om * (K_s om); strictly positive for om != 0."""
    komega = table.apply(omega)
    return 0.5 * table.grid.n_folds * float(np.sum(table.grid.w * omega * komega))


def penalized_energy(table, omega, lam, p):
    """E_s(om) - (lam*N/p) * int (om/lam)^p; requires p > 1/s."""
    s = table.params.s
    if p <= 1.0 / s:
        raise ValueError("penalization exponent p=%g must exceed 1/s=%g" % (p, 1.0 / s))
    penalty = (lam * table.grid.n_folds / p) * float(
        np.sum(table.grid.w * (np.asarray(omega) / lam) ** p))
    return energy(table, omega) - penalty


def localized_mass(grid, omega, X):
    """M(om, X) = int_X om."""
    return integrate(grid, np.where(X.mask, omega, 0.0))


def localized_energy(grid, s, omega, X, X_prime, epsilon):
    """I_s(om, X, X') with the unfolded kernel (eps/|x-x'|)^{2(1-s)}.

    Off-diagonal pairs use exact Cartesian node distances; coincident nodes
    (possible only on X intersect X') use the equal-area disk integral
    rescaled by eps^{2(1-s)}.  Pair sums are chunked to bound memory and run
    in a fixed order.
    """
    omega = np.asarray(omega, dtype=float)
    ex = 2.0 * (1.0 - s)
    ma = (omega * grid.w).ravel()
    xa = grid.xx.ravel()
    ya = grid.yy.ravel()
    ia = np.flatnonzero(X.mask.ravel() & (ma != 0.0))
    ib = np.flatnonzero(X_prime.mask.ravel() & (ma != 0.0))
    if ia.size == 0 or ib.size == 0:
        return 0.0
    xb, yb, mb = xa[ib], ya[ib], ma[ib]
    total = 0.0
    eps_pow = epsilon ** ex
    for start in range(0, ia.size, _PAIR_CHUNK):
        sel = ia[start:start + _PAIR_CHUNK]
        dx = xa[sel][:, None] - xb[None, :]
        dy = ya[sel][:, None] - yb[None, :]
        d2 = dx * dx + dy * dy
        same = sel[:, None] == ib[None, :]
        np.copyto(d2, 1.0, where=same)
        ker = eps_pow * d2 ** (-0.5 * ex)
        np.copyto(ker, 0.0, where=same)
        total += float(ma[sel] @ ker @ mb)
    # coincident nodes: om^2 * w * eps^{2(1-s)} * pi h^{2s} / s per node
    both = np.flatnonzero(X.mask.ravel() & X_prime.mask.ravel() & (ma != 0.0))
    if both.size:
        w_flat = grid.w.ravel()[both]
        om_flat = omega.ravel()[both]
        h2s = (w_flat / math.pi) ** s
        total += float(np.sum(om_flat * om_flat * w_flat
                              * eps_pow * math.pi * h2s / s))
    return total


def riesz_disk_constant(s, n_samples, seed=42):
    """Monte Carlo estimate of the unit-disk self-interaction constant.

    Pairs of points uniform on B(0,1) x B(0,1) via the exact polar map
    (sqrt(u), 2 pi v); the estimator is the plain sample mean of
    |x - x'|^{-2(1-s)} (the 1/pi^2 normalization cancels against the joint
    density).  Returns (estimate, standard error).
    """
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0,1)")
    if n_samples < 10 ** 4:
        raise ValueError("n_samples must be at least 1e4")
    rng = np.random.default_rng(seed)
    ex = -(2.0 * (1.0 - s))
    n = int(n_samples)
    rad1 = np.sqrt(rng.random(n))
    ang1 = 2.0 * math.pi * rng.random(n)
    rad2 = np.sqrt(rng.random(n))
    ang2 = 2.0 * math.pi * rng.random(n)
    dx = rad1 * np.cos(ang1) - rad2 * np.cos(ang2)
    dy = rad1 * np.sin(ang1) - rad2 * np.sin(ang2)
    vals = (dx * dx + dy * dy) ** (0.5 * ex)
    est = float(np.mean(vals))
    err = float(np.std(vals, ddof=1) / math.sqrt(n))
    return est, err
