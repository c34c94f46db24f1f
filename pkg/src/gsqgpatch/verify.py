"""Self-contained property suites for the kernel, functional, and
rearrangement layers.

Each suite returns a list of {property, passed, detail} rows so the CLI can
print a table and tests can assert on the aggregate.  All randomness is
seeded; suites are deterministic for a given (seed, samples).

Covered here: ring-rearrangement invariants (mass multisets, idempotence,
energy monotonicity), kernel symmetry/positivity/backend agreement, the
three localized-energy inequalities

    I_s(om, X, X)  <= J_s M^{1+s}
    I_s(om, X, X') <= (1/s) M M'^s
    I_s(om, X, X') <= (eps/dist(X,X'))^{2(1-s)} M M'   (disjoint X, X')

with J_s the Monte Carlo unit-disk constant, the angular factorization
positivity sweep, and exhaustive bathtub verification on short rings.
"""

import math

import numpy as np

from . import kernel as kernelmod
from .diagnostics import phi_eval, verify_combinatorics
from .functionals import (Region, energy, localized_energy, localized_mass,
                          region_all, region_ball, region_band,
                          riesz_disk_constant)
from .geometry import SectorGrid, build_grid
from .kernel import KernelParams, build_kernel_table, riesz_constant
from .rearrange import bathtub_project, ring_positions, steiner_symmetrize

SUITE_NAMES = ("rearrange", "kernel", "energy-bounds", "combinatorics",
               "bathtub", "all")


def run_suite(name, seed=42, samples=None):
    """Dispatch a named suite; 'all' concatenates every suite."""
    if name == "rearrange":
        return suite_rearrange(seed)
    if name == "kernel":
        return suite_kernel(seed)
    if name == "energy-bounds":
        return suite_energy_bounds(seed)
    if name == "combinatorics":
        return suite_combinatorics(seed, samples or 10 ** 4)
    if name == "bathtub":
        return suite_bathtub()
    if name == "all":
        rows = []
        for nm in SUITE_NAMES[:-1]:
            rows.extend(run_suite(nm, seed=seed, samples=samples))
        return rows
    raise ValueError("unknown suite %r; valid names: %s"
                     % (name, ", ".join(SUITE_NAMES)))


def _row(prop, passed, detail=""):
    return {"property": prop, "passed": bool(passed), "detail": detail}


def _random_fields(grid, rng, count, lam):
    """Nonnegative fields bounded by 0.9*lam with spread supports."""
    fields = []
    for _ in range(count):
        kind = rng.integers(0, 3)
        u = rng.random(grid.shape)
        if kind == 0:
            om = 0.9 * lam * u * (u > 0.35)
        elif kind == 1:
            x0 = rng.uniform(0.7, 1.3)
            y0 = rng.uniform(-0.3, 0.3)
            sig = rng.uniform(0.15, 0.5)
            bump = np.exp(-((grid.xx - x0) ** 2 + (grid.yy - y0) ** 2)
                          / sig ** 2)
            om = 0.9 * lam * bump * (0.3 + 0.7 * u)
        else:
            om = 0.9 * lam * u ** 3
        if not om.any():
            om = np.full(grid.shape, 0.1 * lam)
        fields.append(om)
    return fields


def suite_rearrange(seed, count=100):
    rng = np.random.default_rng(seed)
    grid = build_grid(3, 24, 23)
    table = build_kernel_table(grid, KernelParams(0.5, 3))
    fields = _random_fields(grid, rng, count, 10.0)

    ring = np.array([[1.0, 0.0, 2.0, 0.0, 0.0]])
    ex_ok = np.array_equal(steiner_symmetrize(ring),
                           np.array([[0.0, 0.0, 2.0, 1.0, 0.0]]))

    idem_ok = True
    multiset_ok = True
    mass_dev = 0.0
    energy_min_slack = math.inf
    for om in fields:
        sym = steiner_symmetrize(om)
        idem_ok &= np.array_equal(steiner_symmetrize(sym), sym)
        multiset_ok &= np.array_equal(np.sort(om, axis=1), np.sort(sym, axis=1))
        m0 = float(np.sum(om * grid.w))
        m1 = float(np.sum(sym * grid.w))
        mass_dev = max(mass_dev, abs(m1 - m0) / max(m0, 1e-300))
        e0 = energy(table, om)
        de = energy(table, sym) - e0
        energy_min_slack = min(energy_min_slack, de / max(abs(e0), 1e-300))
    return [
        _row("ring [1,0,2,0,0] symmetrizes to [0,0,2,1,0]", ex_ok),
        _row("idempotence on %d fields (exact)" % count, idem_ok),
        _row("per-ring value multisets preserved (exact)", multiset_ok),
        _row("mass preserved on %d fields" % count, mass_dev <= 1e-13,
             "max rel dev %.2e" % mass_dev),
        _row("energy nondecreasing under symmetrization",
             energy_min_slack >= -1e-10,
             "min relative gain %.3e" % energy_min_slack),
    ]


def suite_kernel(seed):
    rng = np.random.default_rng(seed)
    rows = []
    c_half = riesz_constant(0.5)
    rows.append(_row("riesz constant c_{1/2} = 1/(2 pi)",
                     abs(c_half - 1.0 / (2.0 * math.pi)) <= 1e-15,
                     "%.17g" % c_half))
    params = KernelParams(0.5, 2)
    val = kernelmod.kappa(params, 1.0, 1.0, 0.5 * math.pi)
    target = 1.0 / (math.pi * math.sqrt(2.0))
    rows.append(_row("folded kernel at (1,1,pi/2), N=2, s=1/2",
                     abs(val - target) <= 1e-14, "%.17g" % val))

    xi = np.linspace(1e-3, math.pi / 2.0, 200)
    vals = kernelmod.kappa(params, 1.0, 1.0, xi)
    rows.append(_row("kappa decreasing in xi on (0, pi/N]",
                     bool(np.all(np.diff(vals) < 0.0))))

    grid = build_grid(2, 24, 23)
    table = build_kernel_table(grid, KernelParams(0.5, 2))
    u = rng.random(grid.shape)
    v = rng.random(grid.shape)
    lhs = float(np.sum(grid.w * u * table.apply(v)))
    rhs = float(np.sum(grid.w * v * table.apply(u)))
    dev = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    rows.append(_row("self-adjointness in the weighted inner product",
                     dev <= 1e-10, "rel dev %.2e" % dev))

    ku = table.apply(u)
    rows.append(_row("positivity of K on nonnegative fields",
                     bool(np.all(ku > 0.0))))

    dense = table.dense()
    wflat = grid.w.ravel()
    sym = dense * wflat[:, None]          # weighted matrix W K
    sym = 0.5 * (sym + sym.T)
    eigmin = float(np.linalg.eigvalsh(sym)[0])
    scale = float(np.max(np.abs(sym)))
    rows.append(_row("weighted kernel matrix positive semidefinite",
                     eigmin >= -1e-10 * scale,
                     "min eig %.3e (scale %.3e)" % (eigmin, scale)))

    if kernelmod._kernels is not None:
        blk_np = kernelmod._table_block_numpy(grid, table.params)
        diag = np.arange(grid.n_r)
        blk_c = table.block.copy()
        # the raw builder leaves a placeholder in the (i, i, 0-offset)
        # slot; the table constructor overwrites it with the exact self
        # integral, so mask that slot when comparing against the raw build
        blk_np[diag, diag, grid.n_theta - 1] = 0.0
        blk_c[diag, diag, grid.n_theta - 1] = 0.0
        dev_b = float(np.max(np.abs(blk_np - blk_c)
                             / np.maximum(np.abs(blk_np), 1e-300)))
        ap_c = table.apply(u)
        ap_np = kernelmod._apply_block_numpy(table.block, u, grid.n_theta)
        dev_a = float(np.max(np.abs(ap_c - ap_np)
                             / np.maximum(np.abs(ap_np), 1e-300)))
        # summation order differs between the backends, so agreement is
        # relative, not bitwise; bitwise holds for reruns of one backend
        rows.append(_row("compiled and numpy backends agree to 1e-12",
                         dev_b <= 1e-12 and dev_a <= 1e-12,
                         "block dev %.2e, apply dev %.2e" % (dev_b, dev_a)))
    else:
        rows.append(_row("compiled and numpy backends agree to 1e-12", True,
                         "compiled backend not built; numpy path only"))
    rows.append(_row("repeated apply is bitwise deterministic",
                     bool(np.array_equal(table.apply(u), table.apply(u)))))
    return rows


def _node_distance(grid, X, X_prime):
    ax = grid.xx.ravel()[X.mask.ravel()]
    ay = grid.yy.ravel()[X.mask.ravel()]
    bx = grid.xx.ravel()[X_prime.mask.ravel()]
    by = grid.yy.ravel()[X_prime.mask.ravel()]
    if ax.size == 0 or bx.size == 0:
        return math.inf
    best = math.inf
    for start in range(0, ax.size, 512):
        sl = slice(start, start + 512)
        d2 = ((ax[sl][:, None] - bx[None, :]) ** 2
              + (ay[sl][:, None] - by[None, :]) ** 2)
        best = min(best, float(np.min(d2)))
    return math.sqrt(best)


def _random_region(grid, rng):
    kind = rng.integers(0, 3)
    if kind == 0:
        cx = rng.uniform(0.6, 1.6)
        cy = rng.uniform(-0.4, 0.4)
        return region_ball(grid, (cx, cy), rng.uniform(0.15, 0.6))
    if kind == 1:
        a = rng.uniform(0.5, 1.5)
        return region_band(grid, a, a + rng.uniform(0.2, 0.5))
    return region_all(grid)


def suite_energy_bounds(seed, count=100):
    rng = np.random.default_rng(seed)
    grid = build_grid(2, 32, 31)
    s_values = (0.25, 0.5, 0.75)
    disk = {s: riesz_disk_constant(s, 2 * 10 ** 5, seed=seed + 1)
            for s in s_values}
    slack1 = slack2 = slack3 = math.inf
    n3 = 0
    add_dev = 0.0
    for i in range(count):
        s = s_values[i % 3]
        lam = float(rng.uniform(50.0, 400.0))
        eps = 1.0 / math.sqrt(math.pi * lam)
        om = _random_fields(grid, rng, 1, lam)[0]
        X = _random_region(grid, rng)
        Xp = _random_region(grid, rng)
        j_est, j_err = disk[s]
        m = localized_mass(grid, om, X)
        mp = localized_mass(grid, om, Xp)
        if m > 0.0:
            i_xx = localized_energy(grid, s, om, X, X, eps)
            slack1 = min(slack1,
                         ((j_est + 3.0 * j_err) * m ** (1.0 + s) - i_xx)
                         / max(i_xx, 1e-300))
        if m > 0.0 and mp > 0.0:
            i_xy = localized_energy(grid, s, om, X, Xp, eps)
            slack2 = min(slack2, (m * mp ** s / s - i_xy)
                         / max(i_xy, 1e-300))
            dist = _node_distance(grid, X, Xp)
            if 0.0 < dist < math.inf:
                bound = (eps / dist) ** (2.0 * (1.0 - s)) * m * mp
                slack3 = min(slack3, (bound - i_xy) / max(i_xy, 1e-300))
                n3 += 1
        # region additivity on a disjoint split of X
        half = Region(grid, X.mask & (grid.tt < 0.0))
        rest = Region(grid, X.mask & (grid.tt >= 0.0))
        whole = localized_energy(grid, s, om, X, Xp, eps)
        parts = (localized_energy(grid, s, om, half, Xp, eps)
                 + localized_energy(grid, s, om, rest, Xp, eps))
        add_dev = max(add_dev, abs(whole - parts) / max(abs(whole), 1e-300))
    return [
        _row("I(om,X,X) <= J_s M^{1+s} on %d instances" % count,
             slack1 >= -1e-8, "min slack %.3e" % slack1),
        _row("I(om,X,X') <= (1/s) M M'^s", slack2 >= -1e-8,
             "min slack %.3e" % slack2),
        _row("I(om,X,X') <= (eps/dist)^{2(1-s)} M M' (disjoint)",
             slack3 >= -1e-8 and n3 >= 10,
             "min slack %.3e over %d separated pairs" % (slack3, n3)),
        _row("region additivity of I in its first region slot",
             add_dev <= 1e-12, "max rel dev %.2e" % add_dev),
    ]


def suite_combinatorics(seed, samples):
    rows = []
    worst = []
    for n_folds in range(2, 7):
        f_min = math.inf
        per_rel = 0.0
        ok = True
        for s in (0.1, 0.5, 0.9):
            for rho in (0.5, 0.9, 0.99):
                rep = verify_combinatorics(n_folds, s, rho, samples,
                                           seed=seed)
                ok &= rep["passed"]
                f_min = min(f_min, rep["f_min"])
                per_rel = max(per_rel, rep["periodicity_dev"]
                              / max(rep["f_max"], 1e-300))
                if not rep["passed"]:
                    worst.append((n_folds, s, rho))
        rows.append(_row("factorization positive and periodic, N=%d "
                         "(9 (s,rho) pairs)" % n_folds, ok,
                         "min F %.3e, periodicity %.1e" % (f_min, per_rel)))
    # small-rho limit: F/rho^{N-1} approaches a constant as rho -> 0; xi
    # stays inside (0, pi/3) clear of the sin(N xi) zeros
    xi = np.linspace(0.05, math.pi / 3.0 - 0.05, 21)
    f1, _ = _f_hat_ratio(xi, 3, 0.5, 1e-3)
    f2, _ = _f_hat_ratio(xi, 3, 0.5, 2e-3)
    drift = float(np.max(np.abs(f2 - f1) / np.abs(f1)))
    rows.append(_row("F/rho^{N-1} stabilizes as rho -> 0 (N=3, s=1/2)",
                     drift <= 0.02, "rel drift %.2e" % drift))
    if worst:
        rows.append(_row("counterexample combos", False, repr(worst)))
    return rows


def _f_hat_ratio(xi, n_folds, s, rho):
    # the fold sum kills every harmonic below sin(N xi), so the leading
    # small-rho term of Phi is rho^{N-1} sin(N xi)
    phi = phi_eval(xi, n_folds, s, rho)
    ratio = phi / np.sin(n_folds * xi) / rho ** (n_folds - 1)
    return ratio, phi


def _enumerate_subsets(scores):
    """Subset score sums and sizes for a short ring, vectorized over all
    bitmasks (<= 2^12)."""
    n = scores.size
    masks = np.arange(1 << n, dtype=np.int64)
    bits = (masks[:, None] >> np.arange(n)[None, :]) & 1
    sizes = bits.sum(axis=1)
    sums = bits @ scores
    return bits.astype(bool), sizes, sums


def suite_bathtub():
    rows = []
    lam = 3.0
    all_ok = True
    tie_ok = True
    centered_ok = True
    detail = ""
    for n in (3, 5, 7, 9, 11):
        grid = SectorGrid(2, 1, n)
        cell_mass = float(lam * grid.w[0, 0])
        # rank k of a decreasing list goes to ring position pos[k], which
        # yields the symmetric-decreasing arrangement on the ring
        pos = ring_positions(n)
        dec = np.empty(n)
        dec[pos] = np.linspace(2.0, 1.0, n)
        plat = np.empty(n)
        plat[pos] = np.floor(np.linspace(2.0, 1.0, n) * 3.0)
        families = {
            "decreasing": dec,
            "plateau": plat,
            "random": np.cos(7.0 * np.arange(n, dtype=float) + 0.3) + 1.5,
            "all-equal": np.ones(n),
        }
        for name, sc in families.items():
            scores = sc.reshape(1, n)
            bits, sizes, sums = _enumerate_subsets(sc)
            for k2 in range(1, 2 * n + 1):
                budget = 0.5 * k2 * cell_mass
                om = bathtub_project(grid, scores, budget, lam)
                got = float(np.sum(scores * om * grid.w))
                feas = sizes * cell_mass <= budget * (1.0 + 1e-12)
                # objective of a subset: sum of score * om * w = cell_mass
                # per cell times its score (om is lam on selected cells)
                vals = cell_mass * sums[feas]
                best = float(np.max(vals))
                near = np.flatnonzero(feas)[
                    np.abs(vals - best) <= 1e-12 * max(1.0, abs(best))]
                best_sets = {frozenset(np.flatnonzero(bits[i]).tolist())
                             for i in near}
                chosen = frozenset(np.flatnonzero(om.ravel() > 0.0).tolist())
                if not math.isclose(got, best, rel_tol=1e-12, abs_tol=1e-15):
                    all_ok = False
                    detail = "n=%d %s budget=%g: %.17g vs %.17g" % (
                        n, name, budget, got, best)
                if chosen not in best_sets:
                    all_ok = False
                    detail = "n=%d %s budget=%g: selection not optimal" % (
                        n, name, budget)
            if name == "decreasing":
                for k in range(1, n + 1):
                    om = bathtub_project(grid, scores, k * cell_mass, lam)
                    chosen = set(np.flatnonzero(om.ravel() > 0.0).tolist())
                    if chosen != set(pos[:k].tolist()):
                        centered_ok = False
    # documented tie-break: higher score, then smaller |theta|, then the
    # earlier node in the (r, theta) scan (negative theta side)
    grid5 = SectorGrid(2, 1, 5)
    cm = float(lam * grid5.w[0, 0])
    scores = np.array([[0.0, 2.0, 2.0, 2.0, 0.0]])
    om = bathtub_project(grid5, scores, 1.0 * cm, lam)
    tie_ok &= set(np.flatnonzero(om.ravel() > 0).tolist()) == {2}
    om = bathtub_project(grid5, scores, 2.0 * cm, lam)
    tie_ok &= set(np.flatnonzero(om.ravel() > 0).tolist()) == {2, 1}
    om = bathtub_project(grid5, scores, 3.0 * cm, lam)
    tie_ok &= set(np.flatnonzero(om.ravel() > 0).tolist()) == {2, 1, 3}
    rows.append(_row("bathtub matches exhaustive enumeration "
                     "(rings 3..11, all budgets)", all_ok, detail))
    rows.append(_row("symmetric-decreasing scores give the centered block",
                     centered_ok))
    rows.append(_row("tie-break: center first, then negative-theta side",
                     tie_ok))
    return rows
