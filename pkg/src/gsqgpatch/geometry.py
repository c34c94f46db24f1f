"""Polar discretization of one fold of an N-fold symmetric annular sector.

The computational domain is the sector S = {1/2 <= r <= 2, |theta| <= pi/(2N)}
in polar coordinates.  All fields of interest are N-fold symmetric, so a
single fold carries every degree of freedom; the remaining folds are images
under rotation by 2*pi*n/N and enter only through the interaction kernel.

Discretization is by uniform midpoint cells: n_r radial times n_theta angular
cells, nodes at cell centers, quadrature weight w_ij = r_i * dr * dtheta.
The midpoint rule integrates r dr dtheta exactly on each cell, so sum(w)
equals the sector area (pi/N) * (r_hi^2 - r_lo^2) / 2 = 15*pi/(8N) up to
rounding.  n_theta must be odd so that one cell is centered at theta = 0;
rings are then mirror symmetric about theta = 0, which the angular
rearrangement step relies on.

Scalar fields are plain (n_r, n_theta) float arrays; the grid object is
passed alongside wherever weights or coordinates are needed.
"""

import math

import numpy as np

R_LO = 0.5
R_HI = 2.0


class SectorGrid:
    """Node coordinates and midpoint quadrature weights for one sector fold."""

    def __init__(self, n_folds, n_r, n_theta):
        if int(n_folds) != n_folds or n_folds < 2:
            raise ValueError("n_folds must be an integer >= 2")
        if n_r <= 0 or n_theta <= 0:
            raise ValueError("grid sizes must be positive")
        if n_theta % 2 == 0:
            raise ValueError("n_theta must be odd (one cell centered at theta = 0)")
        self.n_folds = int(n_folds)
        self.n_r = int(n_r)
        self.n_theta = int(n_theta)
        self.r_lo = R_LO
        self.r_hi = R_HI
        self.theta_max = math.pi / (2.0 * self.n_folds)
        self.dr = (self.r_hi - self.r_lo) / self.n_r
        self.dtheta = 2.0 * self.theta_max / self.n_theta
        self.r = self.r_lo + self.dr * (np.arange(self.n_r) + 0.5)
        # centered so that theta[j] = -theta[n_theta-1-j] exactly
        self.theta = self.dtheta * (np.arange(self.n_theta) - (self.n_theta - 1) / 2.0)
        self.w_r = self.r * self.dr * self.dtheta
        self.w = np.broadcast_to(self.w_r[:, None], (self.n_r, self.n_theta)).copy()
        self.rr, self.tt = np.meshgrid(self.r, self.theta, indexing="ij")
        self.xx = self.rr * np.cos(self.tt)
        self.yy = self.rr * np.sin(self.tt)

    @property
    def shape(self):
        return (self.n_r, self.n_theta)

    @property
    def n_nodes(self):
        return self.n_r * self.n_theta

    def zeros(self):
        return np.zeros(self.shape)

    def __repr__(self):
        return "SectorGrid(n_folds=%d, n_r=%d, n_theta=%d)" % (
            self.n_folds, self.n_r, self.n_theta)


def build_grid(n_folds, n_r, n_theta):
    """Uniform midpoint grid on the sector; rejects even n_theta."""
    return SectorGrid(n_folds, n_r, n_theta)


def integrate(grid, field, density=None):
    """Quadrature of field * density over the fold.

    density may be None (constant 1), a callable of (r, theta) meshes, or an
    array broadcastable against the field.  density None gives the mass M,
    density r^2 gives the impulse L.
    """
    field = np.asarray(field)
    if field.shape != grid.shape:
        raise ValueError("field shape %s does not match grid %s"
                         % (field.shape, grid.shape))
    if density is None:
        return float(np.sum(field * grid.w))
    dens = density(grid.rr, grid.tt) if callable(density) else np.asarray(density)
    return float(np.sum(field * dens * grid.w))


def patch_scale(lam):
    """Length scale eps with lam * pi * eps^2 = 1: each patch has area 1/lam."""
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    return 1.0 / math.sqrt(math.pi * lam)


def min_lambda(n_folds, margin=0.05):
    """Smallest lambda for which the initializer disk fits inside the sector."""
    eps_max = min(0.5 - margin, math.pi / (4.0 * n_folds))
    return 1.0 / (math.pi * eps_max * eps_max)


def unit_impulse_radius(eps):
    """Radius r_eps in [1-eps, 1+eps] with r^2 + eps^2/2 = 1, by bisection.

    A disk of radius eps centered at (r_eps, 0) then has continuum impulse
    exactly 1 once its mass is 1.
    """
    lo, hi = 1.0 - eps, 1.0 + eps
    f = lambda t: t * t + 0.5 * eps * eps - 1.0
    if f(lo) > 0.0 or f(hi) < 0.0:
        raise ValueError("no unit-impulse radius in [1-eps, 1+eps] for eps=%g" % eps)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-15:
            break
        if f(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def make_varpi(grid, lam):
    """Initial vorticity: lam on the disk B((r_eps, 0), eps), 0 elsewhere.

    eps is fixed by lam*pi*eps^2 = 1 and r_eps solves r^2 + eps^2/2 = 1, so
    the continuum disk field has unit mass and unit impulse; the discrete
    field only approximates that (nodes are classified by their centers) and
    is repaired by the solver's multiplier stage, not here.  If the disk is
    so small that it contains no node center, the nearest node carries the
    field, which keeps the initializer usable in the sub-cell regime.
    """
    eps = patch_scale(lam)
    margin = 0.05
    eps_max = min(0.5 - margin, math.pi / (4.0 * grid.n_folds))
    if eps >= eps_max:
        raise ValueError(
            "initializer disk of radius eps=%.6g does not fit inside the "
            "sector for n_folds=%d; need lambda > %.6g"
            % (eps, grid.n_folds, min_lambda(grid.n_folds, margin)))
    r_eps = unit_impulse_radius(eps)
    d2 = (grid.xx - r_eps) ** 2 + grid.yy ** 2
    field = np.where(d2 <= eps * eps, float(lam), 0.0)
    if not field.any():
        i_flat = int(np.argmin(d2))
        field.flat[i_flat] = float(lam)
    return field
