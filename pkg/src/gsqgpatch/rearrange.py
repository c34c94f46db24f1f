"""Angular rearrangements: per-ring Steiner symmetrization and the bathtub
projection used by the vortex-patch stage.

Steiner symmetrization acts ring by ring (fixed radius): the ring's values
are rearranged into the unique discrete even-decreasing profile about
theta = 0.  Rank 0 goes to the theta = 0 cell, then ranks alternate between
the +theta and -theta neighbors in increasing |theta|, the +theta side
receiving the earlier rank.  Only values move; the per-ring multiset is
preserved exactly, so every radial moment of the field is invariant and the
map is idempotent.

The bathtub projection maximizes a linear functional sum(score * om * w)
over fields 0 <= om <= lam with mass at most the budget: it saturates om at
lam on the highest-score cells until the next whole cell would overshoot the
budget.  Ties are broken deterministically: larger score first, then smaller
|theta|, then smaller r, then flat node index.
"""

import numpy as np


def ring_positions(n_theta):
    """Placement map: pos[k] = theta index receiving the k-th largest value."""
    if n_theta % 2 == 0:
        raise ValueError("n_theta must be odd")
    center = (n_theta - 1) // 2
    pos = np.empty(n_theta, dtype=np.intp)
    for k in range(n_theta):
        if k % 2 == 1:
            pos[k] = center + (k + 1) // 2
        else:
            pos[k] = center - k // 2
    return pos


def steiner_symmetrize(omega):
    """Even-decreasing rearrangement of every ring about theta = 0."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0.0):
        raise ValueError("steiner symmetrization expects a nonnegative field")
    pos = ring_positions(omega.shape[1])
    out = np.empty_like(omega)
    out[:, pos] = np.sort(omega, axis=1)[:, ::-1]
    return out


def bathtub_project(grid, scores, mass_budget, lam):
    """Indicator field lam * 1_A, A = the k highest-score cells with
    lam * sum_A w <= mass_budget and k maximal.

    Ties are broken deterministically: higher score first, then smaller
    |theta|, then smaller r, then the smaller flat index (the theta < 0
    side of a symmetric pair)."""
    if mass_budget <= 0.0:
        raise ValueError("mass_budget must be positive")
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    capacity = lam * float(np.sum(grid.w))
    if mass_budget > capacity * (1.0 + 1e-12):
        raise ValueError("mass_budget %g exceeds the sector capacity %g"
                         % (mass_budget, capacity))
    sc = np.asarray(scores, dtype=float).ravel()
    abs_t = np.abs(grid.tt).ravel()
    r_flat = grid.rr.ravel()
    # lexsort: last key is primary; stability leaves flat index as final tie-break
    order = np.lexsort((r_flat, abs_t, -sc))
    cum = lam * np.cumsum(grid.w.ravel()[order])
    k = int(np.searchsorted(cum, mass_budget * (1.0 + 1e-12), side="right"))
    out = np.zeros(grid.n_nodes)
    out[order[:k]] = lam
    return out.reshape(grid.shape)
