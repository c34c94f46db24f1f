"""CLI driver tests: config validation, output files, exit codes, and
byte-identical reruns."""

import json
import math

import numpy as np
import pytest

from gsqgpatch import cli
from gsqgpatch.cli import (ConfigError, _effective_config, _sanitize,
                           _write_field_csv, config_hash, load_config, main,
                           read_field_csv)


def write_config(path, **extra):
    doc = {"s": 0.5, "N": 2, "lambda": 60.0,
           "grid": {"n_r": 24, "n_theta": 23}}
    doc.update(extra)
    path.write_text(json.dumps(doc))
    return path


# ---------------------------------------------------------------- config


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(str(tmp_path / "nope.json"))


def test_load_config_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(p))


def test_load_config_not_object(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(str(p))


def test_load_config_unknown_field(tmp_path):
    p = write_config(tmp_path / "c.json", bogus=1)
    with pytest.raises(ConfigError, match="unknown config field.*bogus"):
        load_config(str(p))


@pytest.mark.parametrize("missing", ["s", "N", "lambda", "grid"])
def test_load_config_missing_required(tmp_path, missing):
    doc = {"s": 0.5, "N": 2, "lambda": 60.0,
           "grid": {"n_r": 8, "n_theta": 7}}
    del doc[missing]
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="missing config field: " + missing):
        load_config(str(p))


def test_effective_config_defaults(tmp_path):
    doc = load_config(str(write_config(tmp_path / "c.json")))
    cfg = _effective_config(doc, {})
    assert cfg["tolerances"] == {"omega": cli.DEFAULT_TOL_OMEGA,
                                 "constraints": cli.DEFAULT_TOL_C}
    assert cfg["p_schedule"] is None
    assert cfg["max_iters"] == cli.DEFAULT_MAX_ITERS
    assert cfg["seed"] == cli.DEFAULT_SEED
    assert cfg["output_dir"] == "."


def test_effective_config_overrides(tmp_path):
    doc = load_config(str(write_config(tmp_path / "c.json")))
    cfg = _effective_config(doc, {"lam": 90.0, "s": 0.75, "n_folds": 3,
                                  "out": "there"})
    assert cfg["lambda"] == 90.0
    assert cfg["s"] == 0.75
    assert cfg["N"] == 3
    assert cfg["output_dir"] == "there"


def test_effective_config_grid_validation(tmp_path):
    doc = load_config(str(write_config(tmp_path / "c.json")))
    bad = dict(doc)
    bad["grid"] = {"n_r": 8}
    with pytest.raises(ConfigError, match="grid must be an object"):
        _effective_config(bad, {})
    bad["grid"] = {"n_r": 8, "n_theta": 0}
    with pytest.raises(ConfigError, match="n_theta must be a positive"):
        _effective_config(bad, {})


def test_effective_config_unknown_tolerance(tmp_path):
    doc = load_config(str(write_config(tmp_path / "c.json",
                                       tolerances={"omegaa": 1e-8})))
    with pytest.raises(ConfigError, match="unknown tolerances field"):
        _effective_config(doc, {})


def test_config_hash_stable_and_sensitive(tmp_path):
    doc = load_config(str(write_config(tmp_path / "c.json")))
    a = config_hash(_effective_config(doc, {}))
    b = config_hash(_effective_config(doc, {}))
    c = config_hash(_effective_config(doc, {"lam": 61.0}))
    assert a == b
    assert a != c
    assert len(a) == 64


def test_sanitize_json_safe():
    doc = _sanitize({"x": math.nan, "y": (1, 2), "z": np.float64(0.5),
                     3: "int key"})
    assert doc["x"] == "nan"
    assert doc["y"] == [1, 2]
    assert isinstance(doc["z"], float)
    assert doc["3"] == "int key"
    json.dumps(doc)


# ---------------------------------------------------------------- solve


@pytest.fixture(scope="module")
def solve_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("solve")
    cfgp = write_config(tmp / "c.json")
    out = tmp / "run"
    code = main(["solve", "--config", str(cfgp), "--out", str(out)])
    return code, cfgp, out


def test_solve_exit_code(solve_run):
    assert solve_run[0] == 0


def test_solve_summary_contents(solve_run):
    _, _, out = solve_run
    doc = json.loads((out / "summary.json").read_text())
    for key in ("alpha", "mu", "energy", "mass", "impulse", "residual_el",
                "support_radius", "converged"):
        assert key in doc
    assert "wall_time" not in doc
    assert doc["converged"] is True
    assert doc["config"]["lambda"] == 60.0
    assert doc["config_hash"] == config_hash(doc["config"])
    assert 0.0 < doc["mass"] <= 1.0 + 1e-9


def test_solve_field_csv_shape(solve_run):
    _, _, out = solve_run
    lines = (out / "field.csv").read_text().splitlines()
    doc = json.loads((out / "summary.json").read_text())
    assert lines[0] == "# config_hash=%s" % doc["config_hash"]
    assert lines[1] == "r,theta,omega,psi"
    assert len(lines) == 2 + 24 * 23


def test_solve_rerun_byte_identical(solve_run):
    _, cfgp, out = solve_run
    before = {name: (out / name).read_bytes()
              for name in ("summary.json", "field.csv")}
    assert main(["solve", "--config", str(cfgp), "--out", str(out)]) == 0
    for name, blob in before.items():
        assert (out / name).read_bytes() == blob


def test_solve_cli_override_lands_in_summary(tmp_path):
    cfgp = write_config(tmp_path / "c.json")
    out = tmp_path / "run"
    code = main(["solve", "--config", str(cfgp), "--lambda", "80",
                 "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["config"]["lambda"] == 80.0


def test_solve_rejects_lambda_list(tmp_path, capsys):
    cfgp = write_config(tmp_path / "c.json", **{"lambda": [60.0, 120.0]})
    code = main(["solve", "--config", str(cfgp), "--out", str(tmp_path)])
    assert code == 1
    err = capsys.readouterr().err
    assert "config error:" in err
    assert "single number" in err


def test_solve_bad_s_is_config_error(tmp_path, capsys):
    cfgp = write_config(tmp_path / "c.json")
    code = main(["solve", "--config", str(cfgp), "--s", "1.5",
                 "--out", str(tmp_path)])
    assert code == 1
    err = capsys.readouterr().err
    assert "config error:" in err
    assert "s must lie in (0,1)" in err


def test_solve_nonconverged_exit_2_still_writes(tmp_path, monkeypatch):
    real = cli.solve_patch

    def flaky(cfg):
        rep = real(cfg)
        rep.converged = False
        return rep

    monkeypatch.setattr(cli, "solve_patch", flaky)
    cfgp = write_config(tmp_path / "c.json")
    out = tmp_path / "run"
    code = main(["solve", "--config", str(cfgp), "--out", str(out)])
    assert code == 2
    doc = json.loads((out / "summary.json").read_text())
    assert doc["converged"] is False
    assert (out / "field.csv").exists()


def test_read_field_csv_roundtrip_bitwise(tmp_path, grid_small, rng):
    om = rng.random(grid_small.shape) * 1e3
    psi = rng.standard_normal(grid_small.shape) / 7.0
    path = tmp_path / "field.csv"
    _write_field_csv(str(path), grid_small, om, psi, "deadbeef")
    r, th, om2, psi2 = read_field_csv(str(path))
    n_t = grid_small.n_theta
    assert np.array_equal(r, np.repeat(grid_small.r, n_t))
    assert np.array_equal(th, np.tile(grid_small.theta, grid_small.n_r))
    assert np.array_equal(om2, om.ravel())
    assert np.array_equal(psi2, psi.ravel())


# ---------------------------------------------------------------- sweep


@pytest.fixture(scope="module")
def sweep_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sweep")
    cfgp = write_config(tmp / "c.json", **{"lambda": [60.0, 120.0]})
    out = tmp / "run"
    code = main(["sweep", "--config", str(cfgp), "--out", str(out)])
    return code, cfgp, out


def test_sweep_exit_code(sweep_run):
    assert sweep_run[0] == 0


def test_sweep_csv_layout(sweep_run):
    _, _, out = sweep_run
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == ("lambda,epsilon,alpha,mu,mu_over_lambda_pow,energy,"
                        "support_radius,mass_outside_4,mass_outside_16,"
                        "barycenter_offset,converged")
    assert len(lines) == 2 + 2
    for line in lines[2:]:
        cells = line.split(",")
        assert len(cells) == 11
        assert cells[-1] in ("true", "false")
        float(cells[0])


def test_sweep_asymptotics_json(sweep_run):
    _, _, out = sweep_run
    doc = json.loads((out / "asymptotics.json").read_text())
    for key in ("slope_support_radius", "mu_ratio_spread",
                "alpha_limit_closed_form", "alpha_rel_err_at_largest",
                "dirac_moment_certified", "n_success", "config_hash"):
        assert key in doc
    assert "records" not in doc
    assert doc["lambdas"] == [60.0, 120.0]
    assert doc["n_success"] == 2


def test_sweep_rejects_scalar_lambda(tmp_path, capsys):
    cfgp = write_config(tmp_path / "c.json")
    code = main(["sweep", "--config", str(cfgp), "--out", str(tmp_path)])
    assert code == 1
    assert "must be a list" in capsys.readouterr().err


def test_sweep_rejects_empty_lambda_list(tmp_path, capsys):
    cfgp = write_config(tmp_path / "c.json", **{"lambda": []})
    code = main(["sweep", "--config", str(cfgp), "--out", str(tmp_path)])
    assert code == 1
    assert "must not be empty" in capsys.readouterr().err


def test_sweep_partial_failure_exit_2(tmp_path, monkeypatch):
    import gsqgpatch.solver as solver_mod
    real = solver_mod.solve_patch

    def flaky(cfg):
        if cfg.lam == 120.0:
            raise RuntimeError("synthetic divergence")
        return real(cfg)

    monkeypatch.setattr(solver_mod, "solve_patch", flaky)
    cfgp = write_config(tmp_path / "c.json", **{"lambda": [60.0, 120.0]})
    out = tmp_path / "run"
    code = main(["sweep", "--config", str(cfgp), "--out", str(out)])
    assert code == 2
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[2].endswith("true")
    assert lines[3].endswith("false")
    assert "nan" in lines[3]


# ---------------------------------------------------------------- verify


def test_verify_suite_runs_clean(capsys):
    code = main(["verify", "rearrange", "--samples", "40"])
    out = capsys.readouterr().out
    assert code == 0
    assert "PASS" in out
    assert "FAIL" not in out
    assert "properties passed" in out


def test_verify_unknown_suite(capsys):
    code = main(["verify", "definitely-not-a-suite"])
    assert code == 1
    err = capsys.readouterr().err
    assert "unknown suite" in err
    for name in cli.SUITE_NAMES:
        assert name in err


def test_no_command_prints_usage(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err.lower()
