"""Fixed-point continuation solver for the penalized maximization problems
and their vortex-patch limit.

One outer iterate at penalization exponent p does

    (alpha, mu) <- multipliers with M(om~) = L(om~) = 1,  om~ fixed point of
                   om~ = lam * (K_s om + (alpha/2) r^2 - mu)_+^{1/(p-1)}
                   with K_s om frozen,
    om <- steiner_symmetrize(om~),

until the relative L1 change of om drops below tol_omega.  Freezing K_s om
during the multiplier solve keeps every inner residual evaluation O(nodes);
the outer loop supplies the kernel feedback.  Rings are only permuted by the
symmetrization, so the multiplier-enforced constraints survive it to
rounding.  Stages run over an ascending p schedule with warm starts; a stage
whose multiplier system cannot be solved to tolerance (at large p the
marginal nodes sit at depths below float64 resolution) is rolled back and
recorded, and continuation proceeds from the last good state.

The final patch stage replaces the EL update by the bathtub projection with
mass budget 1 on the scores K_s om + (alpha/2) r^2, re-solving alpha alone
so the impulse stays near 1; the mass is then exact only up to one cell of
quantization, which is reported honestly rather than hidden.  The reported
rotation speed comes from the integrated stationarity identity
int om * d/dx1 psi = 0 (force balance): the self-field term cancels exactly
in pairs there, so the estimate is free of the O(lam h^{2s}) self-quadrature
tilt that contaminates the raw discrete multiplier on coarse grids.
"""

import logging
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .geometry import build_grid, integrate, make_varpi, min_lambda, patch_scale
from .kernel import KernelParams, build_kernel_table
from .rearrange import bathtub_project, steiner_symmetrize

log = logging.getLogger(__name__)

ALPHA_BOX = 50.0        # multiplier search box for alpha
MU_DOUBLINGS = 200      # bracket expansion cap for the mu bisection


class InfeasibleMultipliersError(RuntimeError):
    """No (alpha, mu) in the search box meets the constraint tolerance."""


@dataclass
class SolverConfig:
    s: float
    n_folds: int
    lam: float
    n_r: int
    n_theta: int
    p_schedule: tuple = None
    max_outer_iters: int = 500
    tol_omega: float = 1e-8
    tol_c: float = 1e-9
    damping: float = 1.0
    patch_stage: bool = True
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0,1)")
        if self.n_folds < 2:
            raise ValueError("n_folds must be >= 2")
        if self.tol_omega <= 0.0 or self.tol_c <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.lam <= min_lambda(self.n_folds):
            raise ValueError(
                "lambda=%g is below the initializer feasibility bound %g "
                "for n_folds=%d"
                % (self.lam, min_lambda(self.n_folds), self.n_folds))
        if self.p_schedule is None:
            self.p_schedule = default_p_schedule(self.s)
        self.p_schedule = tuple(float(p) for p in self.p_schedule)
        for p in self.p_schedule:
            if p <= 1.0 / self.s:
                raise ValueError("every p in the schedule must exceed 1/s=%g"
                                 % (1.0 / self.s))


def default_p_schedule(s):
    """Start at max(2, ceil(2/s)) and double, capped at 64."""
    p0 = max(2, math.ceil(2.0 / s))
    schedule = [float(p0)]
    while schedule[-1] < 64.0:
        schedule.append(min(2.0 * schedule[-1], 64.0))
    return tuple(schedule)


class SolverState:
    """The evolving (om, alpha, mu) triple plus per-stage bookkeeping."""

    def __init__(self, om, alpha=0.0, mu=0.0, p=None):
        self.om = om
        self.alpha = float(alpha)
        self.mu = float(mu)
        self.p = p
        self.energy_history = []
        self.residual_el = math.nan
        self.iterations = 0
        self.converged = False
        self.failed = False
        self.message = ""
        self.constraint_max = math.nan


@dataclass
class SolverReport:
    alpha: float
    alpha_multiplier: float
    mu: float
    energy: float
    mass: float
    impulse: float
    residual_el: float
    support_radius: float
    barycenter_offset: float
    second_moment: float
    mass_outside: dict
    iterations: list
    p_completed: list
    stage_failures: list
    converged: bool
    two_valued: bool
    boundary_gap_ok: bool
    levelset_mismatch: int
    quantization_limited: bool
    clipping_active: bool
    constraint_max: float
    wall_time: float

    def to_dict(self):
        return asdict(self)


def stream(table, omega, alpha, mu):
    """psi = K_s om + (alpha/2) r^2 - mu."""
    return table.apply(omega) + 0.5 * alpha * table.grid.rr ** 2 - mu


def el_update(psi, lam, p):
    """om = lam * (psi)_+^{1/(p-1)}, clipped to [0, lam]."""
    q = 1.0 / (p - 1.0)
    return np.minimum(lam * np.maximum(psi, 0.0) ** q, lam)


def _el_frozen(K, grid, alpha, mu, lam, p):
    return el_update(K + 0.5 * alpha * grid.rr ** 2 - mu, lam, p)


def _mass_impulse(grid, om):
    return (float(np.sum(om * grid.w)),
            float(np.sum(om * grid.w * grid.rr ** 2)))


class _FrozenStream:
    """Fast (M, L) response to (alpha, mu) at frozen K.

    For each alpha the scores c = K + (alpha/2) r^2 are sorted once; a mu
    query then touches only the active nodes c > mu, which keeps the many
    bisection evaluations cheap on concentrated states.
    """

    def __init__(self, K, grid, lam, p):
        self.lam = lam
        self.q = 1.0 / (p - 1.0)
        self.kf = K.ravel()
        self.r2 = grid.rr.ravel() ** 2
        self.wf = grid.w.ravel()

    def at_alpha(self, alpha):
        c = self.kf + 0.5 * alpha * self.r2
        order = np.argsort(c, kind="stable")
        return _AlphaSlice(c[order], self.wf[order], self.r2[order],
                           self.lam, self.q)


class _AlphaSlice:
    def __init__(self, c, w, r2, lam, q):
        self.c = c
        self.w = w
        self.r2 = r2
        self.lam = lam
        self.q = q

    def _om_masses(self, mu):
        k = np.searchsorted(self.c, mu, side="right")
        om = self.lam * (self.c[k:] - mu) ** self.q
        np.minimum(om, self.lam, out=om)
        return k, om

    def mass(self, mu):
        k, om = self._om_masses(mu)
        return float(np.dot(om, self.w[k:]))

    def moments(self, mu):
        k, om = self._om_masses(mu)
        wm = om * self.w[k:]
        return float(np.sum(wm)), float(np.dot(wm, self.r2[k:]))

    def solve_mu(self, mu0, alpha, p):
        """Best-effort mu for M = 1 (M is nonincreasing in mu): bisect to
        float64 resolution and return (mu, |M-1|).  Raises only when no
        bracket exists at all."""
        mu0 = float(mu0)
        f0 = self.mass(mu0) - 1.0
        if f0 == 0.0:
            return mu0, 0.0
        step = max(1.0, 0.5 * abs(mu0))
        lo = hi = mu0
        if f0 > 0.0:
            for _ in range(MU_DOUBLINGS):
                hi = hi + step
                step *= 2.0
                if self.mass(hi) - 1.0 <= 0.0:
                    break
            else:
                raise InfeasibleMultipliersError(
                    "no upper mu bracket below %g at alpha=%g, p=%g"
                    % (hi, alpha, p))
        else:
            for _ in range(MU_DOUBLINGS):
                lo = lo - step
                step *= 2.0
                if self.mass(lo) - 1.0 >= 0.0:
                    break
            else:
                raise InfeasibleMultipliersError(
                    "no lower mu bracket above %g at alpha=%g, p=%g"
                    % (lo, alpha, p))
        best_mu, best_f = mu0, abs(f0)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = self.mass(mid) - 1.0
            if abs(fm) < best_f:
                best_mu, best_f = mid, abs(fm)
            if fm == 0.0:
                break
            if fm > 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 4e-16 * max(1.0, abs(mid)):
                break
        return best_mu, best_f


def _multiplier_newton(K, grid, lam, p, tol, alpha0, mu0, damping):
    """Damped 2x2 Newton with the analytic Jacobian of (M, L) in (alpha, mu).

    On the fractional set {0 < psi, om < lam} the EL map is differentiable:
    d om / d mu = -lam q psi^{q-1}, d om / d alpha = (r^2/2) lam q psi^{q-1},
    q = 1/(p-1).  Returns None when the Jacobian degenerates (plateau) so the
    caller can fall back to nested bisection.
    """
    q = 1.0 / (p - 1.0)
    rr2 = grid.rr ** 2
    x = np.array([alpha0, mu0])

    def resid(xv):
        psi = K + 0.5 * xv[0] * rr2 - xv[1]
        om = el_update(psi, lam, p)
        m, ell = _mass_impulse(grid, om)
        return np.array([m - 1.0, ell - 1.0]), psi, om

    r, psi, om = resid(x)
    for _ in range(60):
        if np.max(np.abs(r)) <= tol:
            return float(x[0]), float(x[1]), om
        frac = (psi > 0.0) & (om < lam)
        if not frac.any():
            return None
        dpsi = np.zeros_like(psi)
        dpsi[frac] = lam * q * psi[frac] ** (q - 1.0)
        g = dpsi * grid.w
        j_ma = 0.5 * float(np.sum(g * rr2))
        j_mm = -float(np.sum(g))
        j_la = 0.5 * float(np.sum(g * rr2 * rr2))
        j_lm = -float(np.sum(g * rr2))
        jac = np.array([[j_ma, j_mm], [j_la, j_lm]])
        if not np.all(np.isfinite(jac)):
            return None
        det = j_ma * j_lm - j_mm * j_la
        # relative degeneracy test: on concentrated states L tracks r^2 M and
        # the rows become parallel; bisection handles that regime
        if abs(det) <= 1e-12 * (abs(j_ma * j_lm) + abs(j_mm * j_la)):
            return None
        try:
            dx = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        t = damping
        improved = False
        for _ in range(30):
            r_new, psi_new, om_new = resid(x + t * dx)
            if np.max(np.abs(r_new)) < np.max(np.abs(r)):
                x = x + t * dx
                r, psi, om = r_new, psi_new, om_new
                improved = True
                break
            t *= 0.5
        if not improved:
            return None
    if np.max(np.abs(r)) <= tol:
        return float(x[0]), float(x[1]), om
    return None


def _multiplier_bisect(K, grid, lam, p, tol, alpha0, mu0):
    """Nested bisection fallback: outer on alpha for L = 1 (empirically
    increasing in alpha), inner best-effort on mu for M = 1 (monotone).

    Near a node activation threshold the p-th-root vertical tangent of
    om = lam*psi^(1/(p-1)) makes M jump by up to ~lam*w*ulp^(1/(p-1)) across
    one ulp of mu, so at unlucky alpha the constraints cannot be met to tol
    in float64.  The search is therefore best-effort: individual queries
    never abort it, a deterministic alpha nudge tries to walk off a pinned
    value, and the best point found is returned together with its realized
    max(|M-1|, |L-1|) when the floor stays above tol.  Raises only when no
    bracket exists inside the search box at all.
    """
    fs = _FrozenStream(K, grid, lam, p)

    def probe(alpha, mu_start):
        sl = fs.at_alpha(alpha)
        mu, merr = sl.solve_mu(mu_start, alpha, p)
        ell = sl.moments(mu)[1]
        return ell - 1.0, mu, merr

    def field_point(alpha, mu):
        # constraint deviation in field evaluation order, the order every
        # downstream check uses
        om = _el_frozen(K, grid, alpha, mu, lam, p)
        m, ell = _mass_impulse(grid, om)
        return om, max(abs(m - 1.0), abs(ell - 1.0))

    g0, mu, merr0 = probe(alpha0, mu0)
    best = (max(abs(g0), merr0), alpha0, mu)
    if best[0] <= tol:
        om, cmax = field_point(alpha0, mu)
        if cmax <= tol:
            return alpha0, mu, om, cmax
    lo = hi = alpha0
    glo = ghi = g0
    step = 0.05 + 0.5 * abs(alpha0)
    if g0 < 0.0:
        while ghi < 0.0:
            hi += step
            step *= 2.0
            if hi > ALPHA_BOX:
                raise InfeasibleMultipliersError(
                    "infeasible multipliers: no alpha bracket in "
                    "[%g, %g] (mu around %g)" % (alpha0, ALPHA_BOX, mu))
            ghi, mu, merr = probe(hi, mu)
            if max(abs(ghi), merr) < best[0]:
                best = (max(abs(ghi), merr), hi, mu)
    else:
        while glo > 0.0:
            lo -= step
            step *= 2.0
            if lo < -ALPHA_BOX:
                raise InfeasibleMultipliersError(
                    "infeasible multipliers: no alpha bracket in "
                    "[%g, %g] (mu around %g)" % (-ALPHA_BOX, alpha0, mu))
            glo, mu, merr = probe(lo, mu)
            if max(abs(glo), merr) < best[0]:
                best = (max(abs(glo), merr), lo, mu)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm, mu, merr = probe(mid, mu)
        score = max(abs(gm), merr)
        if score < best[0]:
            best = (score, mid, mu)
        if score <= tol:
            om, cmax = field_point(mid, mu)
            if cmax <= tol:
                return mid, mu, om, cmax
        if gm < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, abs(mid)):
            break
    # best point may be pinned at a threshold: nudge alpha off the
    # coincidence before settling for the floor
    a_best, mu_best = best[1], best[2]
    scale = 1e-13 * max(1.0, abs(a_best))
    for k in range(1, 61):
        delta = ((k + 1) // 2) * scale * (1.0 if k % 2 else -1.0)
        g, mu_k, merr = probe(a_best + delta, mu_best)
        score = max(abs(g), merr)
        if score < best[0]:
            best = (score, a_best + delta, mu_k)
        if score <= tol:
            om, cmax = field_point(a_best + delta, mu_k)
            if cmax <= tol:
                return a_best + delta, mu_k, om, cmax
    om, cmax = field_point(best[1], best[2])
    return best[1], best[2], om, cmax


def _multiplier_solve_frozen(K, grid, lam, p, tol, alpha0, mu0, damping=1.0):
    """Best multipliers for the frozen stream: damped Newton when it
    converges, nested bisection otherwise.  Returns (alpha, mu, om, cmax)
    where cmax is the realized max(|M-1|, |L-1|); cmax > tol signals the
    float64 resolution floor, not a search failure."""
    got = _multiplier_newton(K, grid, lam, p, tol, alpha0, mu0, damping)
    if got is not None:
        alpha, mu, om = got
        m, ell = _mass_impulse(grid, om)
        return alpha, mu, om, max(abs(m - 1.0), abs(ell - 1.0))
    return _multiplier_bisect(K, grid, lam, p, tol, alpha0, mu0)


def multiplier_solve(table, omega_prev, p, config, alpha0=None, mu0=None):
    """(alpha, mu) making el_update(stream(omega_prev, alpha, mu)) satisfy
    M = L = 1 to tol_c, with K_s omega_prev frozen during the solve."""
    K = table.apply(omega_prev)
    alpha, mu, _, cmax = _multiplier_solve_frozen(
        K, table.grid, config.lam, p, 0.5 * config.tol_c,
        0.0 if alpha0 is None else alpha0, 0.0 if mu0 is None else mu0,
        config.damping)
    if cmax > config.tol_c:
        raise InfeasibleMultipliersError(
            "infeasible multipliers: resolution floor max(|M-1|,|L-1|)="
            "%.3e exceeds tol_c=%.1e at p=%g (alpha searched in [%g, %g]); "
            "a marginal node sits below float64 mu resolution"
            % (cmax, config.tol_c, p, -ALPHA_BOX, ALPHA_BOX))
    return alpha, mu


def solve_penalized(config, p, init, table=None):
    """Fixed-point iteration at one penalization exponent.

    Returns a SolverState; non-convergence and multiplier infeasibility are
    reported on the state (failed stages leave init untouched for rollback),
    never raised.
    """
    if table is None:
        grid = build_grid(config.n_folds, config.n_r, config.n_theta)
        table = build_kernel_table(grid, KernelParams(config.s, config.n_folds))
    grid = table.grid
    lam = config.lam
    tol_inner = 0.5 * config.tol_c
    state = SolverState(init.om.copy(), init.alpha, init.mu, p)
    om = state.om
    K = table.apply(om)
    norm_prev = max(float(np.sum(np.abs(om) * grid.w)), 1e-300)
    best_delta = math.inf
    stalled_for = 0
    try:
        for it in range(config.max_outer_iters):
            alpha, mu, om_new, _ = _multiplier_solve_frozen(
                K, grid, lam, p, tol_inner, state.alpha, state.mu,
                config.damping)
            om_new = steiner_symmetrize(om_new)
            delta = float(np.sum(np.abs(om_new - om) * grid.w)) / norm_prev
            K = table.apply(om_new)
            e = 0.5 * grid.n_folds * float(np.sum(grid.w * om_new * K))
            m, ell = _mass_impulse(grid, om_new)
            dev = max(abs(m - 1.0), abs(ell - 1.0))
            state.constraint_max = dev
            state.om = om = om_new
            state.alpha, state.mu = alpha, mu
            state.energy_history.append(e)
            state.iterations = it + 1
            norm_prev = max(float(np.sum(np.abs(om) * grid.w)), 1e-300)
            if delta <= config.tol_omega:
                if dev <= config.tol_c:
                    state.converged = True
                else:
                    state.failed = True
                    state.message = (
                        "constraint floor max(|M-1|,|L-1|)=%.3e exceeds "
                        "tol_c=%.1e at p=%g: a marginal node sits below "
                        "float64 mu resolution" % (dev, config.tol_c, p))
                break
            # updates that no longer shrink will never pass tol_omega; most
            # often the mu resolution floor keeps a marginal node flapping
            if delta < 0.9 * best_delta:
                best_delta = delta
                stalled_for = 0
            else:
                stalled_for += 1
                if stalled_for >= 15:
                    state.failed = True
                    state.message = (
                        "update stalled at delta=%.3e > tol_omega=%.1e "
                        "(constraints at %.3e) at p=%g"
                        % (delta, config.tol_omega, dev, p))
                    break
        # EL residual at the final iterate, multipliers re-solved fresh
        alpha, mu, om_el, _ = _multiplier_solve_frozen(
            K, grid, lam, p, tol_inner, state.alpha, state.mu, config.damping)
        state.residual_el = float(np.sum(np.abs(om - om_el) * grid.w)) / norm_prev
    except InfeasibleMultipliersError as exc:
        state.failed = True
        state.message = str(exc)
    return state


def _patch_impulse_response(K, grid, lam, alpha):
    scores = K + 0.5 * alpha * grid.rr ** 2
    om = bathtub_project(grid, scores, 1.0, lam)
    guarded = False
    if not om.any():
        # sub-cell regime: one cell already overshoots the budget; keep the
        # best cell rather than the empty field
        om = np.zeros(grid.n_nodes)
        order = np.lexsort((grid.rr.ravel(), np.abs(grid.tt).ravel(),
                            -scores.ravel()))
        om[order[0]] = lam
        om = om.reshape(grid.shape)
        guarded = True
    return om, float(np.sum(om * grid.w * grid.rr ** 2)), guarded


def _patch_alpha_solve(K, grid, lam, alpha_prev):
    """One-unknown alpha adjustment for L = 1 against the bathtub projection.

    L(alpha) is a nondecreasing step function here, so this bisects to the
    step nearest 1 inside a trust box around the previous alpha and keeps
    the previous value whenever the response is degenerate (quantized
    support, single cell) or would not improve |L - 1|.
    """
    _, ell0, _ = _patch_impulse_response(K, grid, lam, alpha_prev)
    g0 = ell0 - 1.0
    lo = 0.25 * alpha_prev - 0.05
    hi = 4.0 * alpha_prev + 0.05
    _, ell_lo, _ = _patch_impulse_response(K, grid, lam, lo)
    _, ell_hi, _ = _patch_impulse_response(K, grid, lam, hi)
    if (ell_lo - 1.0) * (ell_hi - 1.0) > 0.0:
        return alpha_prev
    best_a, best_g = alpha_prev, abs(g0)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        _, ell, _ = _patch_impulse_response(K, grid, lam, mid)
        g = ell - 1.0
        if abs(g) < best_g:
            best_a, best_g = mid, abs(g)
        if g < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, abs(mid)):
            break
    return best_a


def _patch_stage(table, config, init):
    """Iterate {stream -> bathtub -> symmetrize} with the 1-unknown alpha
    solve; mass is enforced by the budget up to one-cell quantization."""
    grid = table.grid
    lam = config.lam
    state = SolverState(init.om.copy(), init.alpha, init.mu, math.inf)
    om = state.om
    om_prev2 = None
    guarded_any = False
    K = table.apply(om)
    for it in range(60):
        alpha = _patch_alpha_solve(K, grid, lam, state.alpha)
        om_new, _, guarded = _patch_impulse_response(K, grid, lam, alpha)
        guarded_any = guarded_any or guarded
        om_new = steiner_symmetrize(om_new)
        state.iterations = it + 1
        if np.array_equal(om_new, om) and alpha == state.alpha:
            state.converged = True
            state.alpha = alpha
            break
        if om_prev2 is not None and np.array_equal(om_new, om_prev2) \
                and not np.array_equal(om_new, om):
            # two-cycle between equal-score supports; keep the current state
            state.message = "patch stage cycling between two supports"
            break
        om_prev2 = om
        state.om = om = om_new
        state.alpha = alpha
        K = table.apply(om)
        state.energy_history.append(
            0.5 * grid.n_folds * float(np.sum(grid.w * om * K)))
    # threshold mu so that the patch is exactly {psi > 0} (mid-gap when the
    # score separates, the boundary value on ties)
    K = table.apply(state.om)
    scores = K + 0.5 * state.alpha * grid.rr ** 2
    sel = state.om > 0.0
    smin = float(np.min(scores[sel]))
    if np.all(sel):
        state.mu = smin - 1.0
    else:
        snext = float(np.max(scores[~sel]))
        state.mu = 0.5 * (smin + snext) if snext < smin else smin
    psi = scores - state.mu
    norm = max(float(np.sum(state.om * grid.w)), 1e-300)
    patch_field = np.where(psi > 0.0, lam, 0.0)
    state.residual_el = float(np.sum(np.abs(state.om - patch_field) * grid.w)) / norm
    m, ell = _mass_impulse(grid, state.om)
    state.constraint_max = max(abs(m - 1.0), abs(ell - 1.0))
    # {psi > 0} must match the support up to a one-cell boundary band
    band = _dilate(sel) & ~_erode(sel)
    mismatch_mask = (psi > 0.0) != sel
    mismatch = int(np.count_nonzero(mismatch_mask))
    if (mismatch_mask & ~band).any():
        state.failed = True
        state.message = ("level set {psi > 0} differs from the support "
                         "outside the one-cell boundary band "
                         "(%d mismatched cells)" % mismatch)
    return state, psi, guarded_any, mismatch


def _dilate(mask):
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def _erode(mask):
    return ~_dilate(~mask)


def alpha_force_balance(grid, s, n_folds, omega):
    """Rotation speed from the integrated stationarity of the stream field.

    At a constrained maximizer, int om * d/dx1(psi) = 0 because om grad psi
    is the gradient of a function of psi that vanishes on the support
    boundary.  Substituting psi = K_s om + (alpha/2) r^2 - mu gives

        alpha * int om x1 = 2(1-s) c_s sum_{n>=1} int int om(x) om(y)
                            (x - R_n y)_1 / |x - R_n y|^{2(2-s)} dy dx;

    the n = 0 self term cancels exactly in (x, y) pairs, so no singular or
    near-singular quadrature enters.  The result is normalized by the total
    mass, making it invariant under om -> c om (a point mass of any size at
    (1, 0) reproduces the closed-form N-point rotation speed).
    """
    from .kernel import riesz_constant
    c_s = riesz_constant(s)
    m = (np.asarray(omega) * grid.w).ravel()
    keep = np.flatnonzero(m > 0.0)
    if keep.size == 0:
        raise ValueError("omega has empty support")
    mk = m[keep]
    x = grid.xx.ravel()[keep]
    y = grid.yy.ravel()[keep]
    total_mass = float(np.sum(mk))
    num = 0.0
    chunk = 1024
    for n in range(1, n_folds):
        ph = 2.0 * math.pi * n / n_folds
        xn = math.cos(ph) * x - math.sin(ph) * y
        yn = math.sin(ph) * x + math.cos(ph) * y
        for start in range(0, keep.size, chunk):
            sl = slice(start, start + chunk)
            dx = x[sl][:, None] - xn[None, :]
            dy = y[sl][:, None] - yn[None, :]
            d2 = dx * dx + dy * dy
            num += float(mk[sl] @ (dx * d2 ** (s - 2.0)) @ mk)
    num *= 2.0 * (1.0 - s) * c_s
    den = float(np.dot(mk, x))
    return num / (den * total_mass)


def solve_patch(config):
    """Continuation over the p schedule plus the bathtub patch stage."""
    t0 = time.perf_counter()
    grid = build_grid(config.n_folds, config.n_r, config.n_theta)
    table = build_kernel_table(grid, KernelParams(config.s, config.n_folds))
    lam = config.lam
    eps = patch_scale(lam)
    cells_across = 2.0 * eps / max(grid.dr, grid.dtheta)
    if cells_across < 8.0:
        log.warning(
            "patch diameter 2*eps=%.3g spans %.2f cells (< 8); concentration "
            "diagnostics are quantization limited at lambda=%g",
            2.0 * eps, cells_across, lam)
    om0 = make_varpi(grid, lam)
    good = SolverState(om0, 0.0, 0.0)
    stage_iters = []
    p_completed = []
    failures = []
    for p in config.p_schedule:
        st = solve_penalized(config, p, good, table=table)
        stage_iters.append({"p": p, "iterations": st.iterations,
                            "converged": st.converged, "failed": st.failed,
                            "residual_el": st.residual_el,
                            "constraint_max": st.constraint_max,
                            "energy_start": good.energy_history[-1]
                            if good.energy_history else math.nan,
                            "energy_final": st.energy_history[-1]
                            if st.energy_history else math.nan,
                            "message": st.message})
        log.info("stage p=%-4g iters=%-3d resid=%.3e %s", p, st.iterations,
                 st.residual_el,
                 "FAILED: " + st.message if st.failed else "")
        if st.failed or not st.converged:
            failures.append({"p": p, "message": st.message or
                             "no convergence in %d iterations" % st.iterations})
            continue
        good = st
        p_completed.append(p)
    quant_guard = False
    psi_final = None
    patch_failed = False
    mismatch = 0
    if config.patch_stage:
        patch, psi_final, quant_guard, mismatch = _patch_stage(table, config,
                                                               good)
        patch_failed = patch.failed
        stage_iters.append({"p": math.inf, "iterations": patch.iterations,
                            "converged": patch.converged,
                            "failed": patch.failed,
                            "residual_el": patch.residual_el,
                            "constraint_max": patch.constraint_max,
                            "energy_start": good.energy_history[-1]
                            if good.energy_history else math.nan,
                            "energy_final": patch.energy_history[-1]
                            if patch.energy_history else math.nan,
                            "message": patch.message})
        log.info("patch stage iters=%-3d resid=%.3e %s", patch.iterations,
                 patch.residual_el, patch.message)
        if patch.failed:
            failures.append({"p": math.inf, "message": patch.message})
            final = good
            psi_final = None
        else:
            final = patch
    else:
        final = good
    om = final.om
    m, ell = _mass_impulse(grid, om)
    e = 0.5 * grid.n_folds * float(np.sum(grid.w * om * table.apply(om)))
    from .diagnostics import support_stats
    stats = support_stats(grid, om, eps)
    fb = alpha_force_balance(grid, config.s, config.n_folds, om)
    two_valued = bool(np.all((om == 0.0) | (om == lam)))
    support = om > 0.0
    boundary_gap_ok = not (support[0, :].any() or support[-1, :].any()
                           or support[:, 0].any() or support[:, -1].any())
    clipping = bool(np.any(final.om >= lam)) and not config.patch_stage
    report = SolverReport(
        alpha=fb,
        alpha_multiplier=final.alpha,
        mu=final.mu,
        energy=e,
        mass=m,
        impulse=ell,
        residual_el=final.residual_el,
        support_radius=stats["support_radius"],
        barycenter_offset=stats["barycenter_offset"],
        second_moment=stats["second_moment"],
        mass_outside=stats["mass_outside"],
        iterations=stage_iters,
        p_completed=p_completed,
        stage_failures=failures,
        converged=bool(final.converged and not patch_failed),
        two_valued=two_valued,
        boundary_gap_ok=boundary_gap_ok,
        levelset_mismatch=mismatch,
        quantization_limited=bool(quant_guard or abs(m - 1.0) > config.tol_c)
        if config.patch_stage else False,
        clipping_active=clipping,
        constraint_max=final.constraint_max,
        wall_time=time.perf_counter() - t0,
    )
    # carried for field output and reuse; deliberately not dataclass fields,
    # so to_dict() stays JSON-clean
    report.state = final
    report.table = table
    report.grid = grid
    report.psi = psi_final if psi_final is not None else (
        table.apply(final.om) + 0.5 * final.alpha * grid.rr ** 2 - final.mu)
    return report
