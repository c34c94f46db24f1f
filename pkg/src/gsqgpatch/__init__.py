"""Co-rotating N-fold vortex patches of the generalized SQG equation.

Numerical library and CLI for constrained energy maximization over one fold
of an N-fold symmetric annular sector: penalized problems with exponent p,
continuation p -> infinity, the vortex-patch limit, and the diagnostics that
check the asymptotic predictions (rotation speed, multiplier scaling,
support concentration, mass decay, kernel monotonicity identity).
"""

from .geometry import (SectorGrid, build_grid, integrate, make_varpi,
                       min_lambda, patch_scale, unit_impulse_radius)
from .kernel import (KernelParams, KernelTable, apply_Ks, build_kernel_table,
                     kappa, num_threads, riesz_constant, self_cell_weight)
from .functionals import (Region, energy, localized_energy, localized_mass,
                          penalized_energy, region_all, region_ball,
                          region_band, region_empty, riesz_disk_constant)
from .rearrange import bathtub_project, ring_positions, steiner_symmetrize
from .solver import (InfeasibleMultipliersError, SolverConfig, SolverReport,
                     SolverState, alpha_force_balance, default_p_schedule,
                     el_update, multiplier_solve, solve_patch,
                     solve_penalized, stream)
from .diagnostics import (alpha_limit, gamma_decay, phi_eval, support_stats,
                          sweep_asymptotics, verify_combinatorics)
from .verify import run_suite

__version__ = "0.1.0"
