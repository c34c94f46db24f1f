"""Diagnostics for the concentration asymptotics and the angular kernel
factorization.

The large-lambda predictions under test: the rotation speed approaches the
N-point-vortex value

    alpha -> sum_{n=1}^{N-1} c_s (1-s) / (2 sin(n pi / N))^{2(1-s)},

the support contracts to B((1,0), C/sqrt(lambda)) so the log-log slope of
support radius versus lambda is -1/2, the chemical potential scales like
lambda^{1-s} with a bounded ratio spread, and the mass outside B((1,0),
Lam*eps) decays like Lam^{-gamma_s} with gamma_s = (1 + 1/(2(1-s)))^{-1}.

The angular factorization check: with phi(x) = (1 - rho*x)^{-(2-s)} and
xi_n = xi + 2 pi n / N,

    Phi(xi) = sum_n sin(xi_n) phi(cos(xi_n)) = sin(N xi) F(xi)

for a positive 2 pi / N-periodic F.  verify_combinatorics samples F hat =
Phi / sin(N xi), switching to a symmetric difference-quotient limit near the
zeros of sin(N xi), and reports counterexamples to positivity or
periodicity if any arise.
"""

import math

import numpy as np

from .kernel import riesz_constant

MASS_SHELLS = (1, 2, 4, 8, 16, 32)


def alpha_limit(s, n_folds):
    """Rotation speed of N unit point vortices on the unit circle: the
    images of (1,0) sit at chord distances 2 sin(n pi / N)."""
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0,1)")
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    c_s = riesz_constant(s)
    total = 0.0
    for n in range(1, n_folds):
        d = 2.0 * math.sin(math.pi * n / n_folds)
        total += c_s * (1.0 - s) / d ** (2.0 * (1.0 - s))
    return total


def gamma_decay(s):
    """Mass decay exponent: mass outside Lam*eps shells falls like
    Lam^{-gamma_s}."""
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0,1)")
    return 1.0 / (1.0 + 1.0 / (2.0 * (1.0 - s)))


def support_stats(grid, omega, epsilon):
    """Support radius about (1,0), barycenter offset, shell masses, and the
    second central moment per unit mass."""
    om = np.asarray(omega)
    sel = om > 0.0
    if not sel.any():
        raise ValueError("omega has empty support")
    dist = np.hypot(grid.xx - 1.0, grid.yy)
    mass_density = om * grid.w
    total = float(np.sum(mass_density))
    xbar = float(np.sum(mass_density * grid.xx)) / total
    ybar = float(np.sum(mass_density * grid.yy)) / total
    outside = {}
    for shell in MASS_SHELLS:
        outside[shell] = float(np.sum(mass_density[dist > shell * epsilon]))
    moment = float(np.sum(mass_density * ((grid.xx - xbar) ** 2
                                          + (grid.yy - ybar) ** 2))) / total
    return {
        "support_radius": float(np.max(dist[sel])),
        "barycenter_offset": math.hypot(xbar - 1.0, ybar),
        "mass_outside": outside,
        "second_moment": moment,
        "mass": total,
    }


def phi_eval(xi, n_folds, s, rho):
    """Phi(xi) = sum_{n=0}^{N-1} sin(xi_n) (1 - rho cos(xi_n))^{-(2-s)}."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0,1)")
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0,1]")
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    xi = np.asarray(xi, dtype=float)
    total = np.zeros_like(xi)
    for n in range(n_folds):
        xin = xi + 2.0 * math.pi * n / n_folds
        total = total + np.sin(xin) * (1.0 - rho * np.cos(xin)) ** (s - 2.0)
    return total if total.ndim else float(total)


def _f_hat(xi, n_folds, s, rho, sin_floor=1e-6, h=1e-4):
    """F hat = Phi / sin(N xi), by symmetric difference quotient where the
    denominator is within sin_floor of a zero."""
    xi = np.asarray(xi, dtype=float)
    sn = np.sin(n_folds * xi)
    near = np.abs(sn) <= sin_floor
    out = np.empty_like(xi)
    far = ~near
    if far.any():
        out[far] = phi_eval(xi[far], n_folds, s, rho) / sn[far]
    if near.any():
        xz = xi[near]
        dphi = phi_eval(xz + h, n_folds, s, rho) - phi_eval(xz - h, n_folds,
                                                            s, rho)
        dsin = np.sin(n_folds * (xz + h)) - np.sin(n_folds * (xz - h))
        out[near] = dphi / dsin
    return out, int(np.count_nonzero(near))


def verify_combinatorics(n_folds, s, rho, n_samples, seed=42):
    """Sample F hat over a period, assert positivity and 2 pi / N
    periodicity, and return a report with any counterexamples."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    xi = rng.uniform(0.0, 2.0 * math.pi, size=n_samples)
    # pin the sin(N xi) zeros so the difference-quotient branch is exercised
    zeros = np.arange(2 * n_folds) * math.pi / n_folds
    xi = np.concatenate([xi, zeros])
    f, n_near = _f_hat(xi, n_folds, s, rho)
    f_shift, _ = _f_hat(xi + 2.0 * math.pi / n_folds, n_folds, s, rho)
    f_max = float(np.max(np.abs(f)))
    per_dev = float(np.max(np.abs(f_shift - f)))
    per_bound = 1e-8 * f_max
    bad = np.flatnonzero(f <= 0.0)
    counterexamples = [{"xi": float(xi[i]), "f_hat": float(f[i])}
                       for i in bad[:10]]
    passed = bad.size == 0 and per_dev <= per_bound
    return {
        "n_folds": n_folds,
        "s": s,
        "rho": rho,
        "n_samples": int(n_samples),
        "n_zero_handled": n_near,
        "f_min": float(np.min(f)),
        "f_max": f_max,
        "periodicity_dev": per_dev,
        "periodicity_bound": per_bound,
        "n_violations": int(bad.size),
        "counterexamples": counterexamples,
        "passed": bool(passed),
    }


def sweep_asymptotics(configs):
    """Run solve_patch per config (sequentially, in the given lambda order)
    and assemble the asymptotic certificates.

    A failed run contributes a converged=false record; regressions use the
    converged rows only, with the count reported.
    """
    from .geometry import patch_scale
    from .solver import solve_patch

    if not configs:
        raise ValueError("empty config list")
    s = configs[0].s
    n_folds = configs[0].n_folds
    for cfg in configs:
        if cfg.s != s or cfg.n_folds != n_folds:
            raise ValueError("sweep configs must share s and n_folds")
    records = []
    for cfg in configs:
        eps = patch_scale(cfg.lam)
        try:
            rep = solve_patch(cfg)
            records.append({
                "lam": cfg.lam,
                "epsilon": eps,
                "alpha": rep.alpha,
                "alpha_multiplier": rep.alpha_multiplier,
                "mu": rep.mu,
                "mu_over_lambda_pow": rep.mu / cfg.lam ** (1.0 - s),
                "energy": rep.energy,
                "support_radius": rep.support_radius,
                "barycenter_offset": rep.barycenter_offset,
                "second_moment": rep.second_moment,
                "mass_outside": rep.mass_outside,
                "mass": rep.mass,
                "converged": bool(rep.converged),
            })
        except Exception as exc:  # a diverged case is data, not an abort
            records.append({
                "lam": cfg.lam, "epsilon": eps, "alpha": math.nan,
                "alpha_multiplier": math.nan, "mu": math.nan,
                "mu_over_lambda_pow": math.nan, "energy": math.nan,
                "support_radius": math.nan, "barycenter_offset": math.nan,
                "second_moment": math.nan, "mass_outside": {},
                "mass": math.nan, "converged": False,
                "error": str(exc),
            })
    ok = [r for r in records if r["converged"]]
    if len(ok) >= 2:
        lams = np.log([r["lam"] for r in ok])
        rads = np.log([r["support_radius"] for r in ok])
        slope = float(np.polyfit(lams, rads, 1)[0])
    else:
        slope = math.nan
    ratios = [r["mu_over_lambda_pow"] for r in ok]
    if ok and min(ratios) > 0.0:
        spread = max(ratios) / min(ratios)
    else:
        spread = math.inf
    dirac = all(r["second_moment"] <= r["support_radius"] ** 2 + 1e-15
                for r in ok) if ok else False
    a_closed = alpha_limit(s, n_folds)
    a_err = abs(ok[-1]["alpha"] - a_closed) / a_closed if ok else math.nan
    return {
        "s": s,
        "n_folds": n_folds,
        "records": records,
        "n_success": len(ok),
        "slope_support_radius": slope,
        "mu_ratio_spread": spread,
        "mu_ratios_positive": bool(ok and min(ratios) > 0.0),
        "alpha_limit_closed_form": a_closed,
        "alpha_rel_err_at_largest": a_err,
        "alpha_comparison_asserted": s >= 0.5,
        "dirac_moment_certified": bool(dirac),
    }
