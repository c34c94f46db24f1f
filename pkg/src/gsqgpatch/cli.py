"""Command line driver: solve one case, sweep lambda, or run the property
suites.

Outputs are plain CSV/JSON with a config hash stamped into every file, no
timestamps or wall times, so a rerun with the same config is byte
identical.  Exit codes: 0 success/converged, 1 configuration error (the
message names the offending field), 2 ran but did not converge (results are
still written).
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys

import numpy as np

from .diagnostics import sweep_asymptotics
from .solver import SolverConfig, solve_patch
from .verify import SUITE_NAMES, run_suite

log = logging.getLogger(__name__)

DEFAULT_TOL_OMEGA = 1e-8
DEFAULT_TOL_C = 1e-9
DEFAULT_MAX_ITERS = 500
DEFAULT_SEED = 42

_CONFIG_KEYS = {"s", "N", "lambda", "grid", "p_schedule", "tolerances",
                "max_iters", "seed", "output_dir"}


class ConfigError(Exception):
    pass


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("cannot read config: %s" % exc)
    except json.JSONDecodeError as exc:
        raise ConfigError("config is not valid JSON: %s" % exc)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError("unknown config field(s): %s" % ", ".join(unknown))
    for key in ("s", "N", "lambda", "grid"):
        if key not in doc:
            raise ConfigError("missing config field: %s" % key)
    return doc


def _effective_config(doc, overrides):
    cfg = dict(doc)
    if overrides.get("lam") is not None:
        cfg["lambda"] = overrides["lam"]
    if overrides.get("s") is not None:
        cfg["s"] = overrides["s"]
    if overrides.get("n_folds") is not None:
        cfg["N"] = overrides["n_folds"]
    if overrides.get("out") is not None:
        cfg["output_dir"] = overrides["out"]
    grid = cfg.get("grid")
    if not isinstance(grid, dict) or set(grid) != {"n_r", "n_theta"}:
        raise ConfigError('grid must be an object {"n_r": int, "n_theta": int}')
    tol = dict(cfg.get("tolerances") or {})
    for key in tol:
        if key not in ("omega", "constraints"):
            raise ConfigError("unknown tolerances field: %s" % key)
    cfg["tolerances"] = {
        "omega": float(tol.get("omega", DEFAULT_TOL_OMEGA)),
        "constraints": float(tol.get("constraints", DEFAULT_TOL_C)),
    }
    cfg.setdefault("p_schedule", None)
    cfg.setdefault("max_iters", DEFAULT_MAX_ITERS)
    cfg.setdefault("seed", DEFAULT_SEED)
    cfg.setdefault("output_dir", ".")
    if not isinstance(cfg["N"], int) or isinstance(cfg["N"], bool):
        raise ConfigError("N must be an integer >= 2")
    if not isinstance(cfg["max_iters"], int) or cfg["max_iters"] < 1:
        raise ConfigError("max_iters must be a positive integer")
    for name in ("n_r", "n_theta"):
        if not isinstance(grid[name], int) or grid[name] < 1:
            raise ConfigError("grid.%s must be a positive integer" % name)
    return cfg


def _solver_config(cfg, lam):
    try:
        return SolverConfig(
            s=float(cfg["s"]), n_folds=cfg["N"], lam=float(lam),
            n_r=cfg["grid"]["n_r"], n_theta=cfg["grid"]["n_theta"],
            p_schedule=cfg["p_schedule"],
            max_outer_iters=cfg["max_iters"],
            tol_omega=cfg["tolerances"]["omega"],
            tol_c=cfg["tolerances"]["constraints"],
            seed=cfg["seed"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc))
    except KeyError as exc:
        raise ConfigError("missing config field: %s" % exc)


def config_hash(cfg):
    blob = json.dumps(_sanitize(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _sanitize(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become
    lists, numpy scalars become Python scalars."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_sanitize(doc), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_field_csv(path, grid, omega, psi, cfg_hash):
    with open(path, "w") as fh:
        fh.write("# config_hash=%s\n" % cfg_hash)
        fh.write("r,theta,omega,psi\n")
        for i in range(grid.n_r):
            for j in range(grid.n_theta):
                fh.write("%.17g,%.17g,%.17g,%.17g\n"
                         % (grid.r[i], grid.theta[j], omega[i, j], psi[i, j]))


def read_field_csv(path):
    """Inverse of the field writer; returns (r, theta, omega, psi) arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=2)
    return data[:, 0], data[:, 1], data[:, 2], data[:, 3]


def cmd_solve(args):
    cfg = _effective_config(load_config(args.config), vars(args))
    lam = cfg["lambda"]
    if isinstance(lam, list):
        raise ConfigError("lambda must be a single number for solve")
    scfg = _solver_config(cfg, lam)
    cfg["p_schedule"] = list(scfg.p_schedule)
    h = config_hash(cfg)
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    report = solve_patch(scfg)
    log.info("solved lambda=%g in %.1fs: alpha=%.6g mu=%.6g energy=%.6g",
             lam, report.wall_time, report.alpha, report.mu, report.energy)
    doc = report.to_dict()
    doc.pop("wall_time")  # deterministic outputs: rerun must be byte-equal
    doc["config"] = cfg
    doc["config_hash"] = h
    _write_json(os.path.join(outdir, "summary.json"), doc)
    _write_field_csv(os.path.join(outdir, "field.csv"), report.grid,
                     report.state.om, report.psi, h)
    return 0 if report.converged else 2


def cmd_sweep(args):
    cfg = _effective_config(load_config(args.config), vars(args))
    lams = cfg["lambda"]
    if not isinstance(lams, list):
        raise ConfigError("lambda must be a list for sweep")
    if not lams:
        raise ConfigError("lambda list must not be empty")
    configs = [_solver_config(cfg, lam) for lam in lams]
    cfg["p_schedule"] = list(configs[0].p_schedule)
    h = config_hash(cfg)
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    result = sweep_asymptotics(configs)
    cols = ("lambda", "epsilon", "alpha", "mu", "mu_over_lambda_pow",
            "energy", "support_radius", "mass_outside_4", "mass_outside_16",
            "barycenter_offset", "converged")
    with open(os.path.join(outdir, "sweep.csv"), "w") as fh:
        fh.write("# config_hash=%s\n" % h)
        fh.write(",".join(cols) + "\n")
        for rec in result["records"]:
            out = rec["mass_outside"]
            row = (rec["lam"], rec["epsilon"], rec["alpha"], rec["mu"],
                   rec["mu_over_lambda_pow"], rec["energy"],
                   rec["support_radius"], out.get(4, math.nan),
                   out.get(16, math.nan), rec["barycenter_offset"])
            fh.write(",".join("%.17g" % v for v in row))
            fh.write(",%s\n" % ("true" if rec["converged"] else "false"))
    doc = {k: v for k, v in result.items() if k != "records"}
    doc["lambdas"] = [float(v) for v in lams]
    doc["config_hash"] = h
    _write_json(os.path.join(outdir, "asymptotics.json"), doc)
    n_bad = sum(1 for rec in result["records"] if not rec["converged"])
    if n_bad:
        log.warning("%d of %d sweep runs did not converge", n_bad,
                    len(result["records"]))
    return 0 if n_bad == 0 else 2


def cmd_verify(args):
    if args.suite not in SUITE_NAMES:
        print("unknown suite %r; valid names: %s"
              % (args.suite, ", ".join(SUITE_NAMES)), file=sys.stderr)
        return 1
    rows = run_suite(args.suite, seed=args.seed, samples=args.samples)
    width = max(len(r["property"]) for r in rows)
    n_fail = 0
    for r in rows:
        mark = "PASS" if r["passed"] else "FAIL"
        n_fail += 0 if r["passed"] else 1
        line = "%s  %-*s" % (mark, width, r["property"])
        if r["detail"]:
            line += "  %s" % r["detail"]
        print(line)
    print("%d/%d properties passed" % (len(rows) - n_fail, len(rows)))
    return 0 if n_fail == 0 else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="gsqgpatch",
        description="co-rotating vortex patch solver on the symmetry sector")
    sub = parser.add_subparsers(dest="command")
    p_solve = sub.add_parser("solve", help="solve one (s, N, lambda) case")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--lambda", dest="lam", type=float, default=None)
    p_solve.add_argument("--s", type=float, default=None)
    p_solve.add_argument("--n-folds", type=int, default=None)
    p_solve.add_argument("--out", default=None)
    p_sweep = sub.add_parser("sweep", help="solve a list of lambdas and fit "
                                           "the asymptotics")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=None)
    p_verify = sub.add_parser("verify", help="run a property suite")
    p_verify.add_argument("suite")
    p_verify.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_verify.add_argument("--samples", type=int, default=None)
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_verify(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
