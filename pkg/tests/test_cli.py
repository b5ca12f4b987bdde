import json
import os

import numpy as np
import pytest

from kpztorus.cli import (
    ConfigError, UnknownKeyError, TypeMismatchError, ConstraintError,
    ExperimentConfig, parse_config, run, report, main,
)


def test_config_defaults_filled():
    cfg = ExperimentConfig.from_dict({"command": "gamma-closed"})
    assert cfg.options == {"beta": 1.0, "L": 1.0}


def test_unknown_command():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"command": "not-a-thing"})


def test_unknown_option_key():
    with pytest.raises(UnknownKeyError):
        ExperimentConfig.from_dict({"command": "gamma-closed",
                                    "options": {"betta": 1.0}})


def test_type_mismatch():
    with pytest.raises(TypeMismatchError):
        ExperimentConfig.from_dict({"command": "gamma-closed",
                                    "options": {"beta": "one"}})


def test_constraint_violation():
    with pytest.raises(ConstraintError):
        ExperimentConfig.from_dict({"command": "gamma-closed",
                                    "options": {"L": -2.0}})


def test_int_promotes_to_float():
    cfg = ExperimentConfig.from_dict({"command": "gamma-closed",
                                      "options": {"beta": 2}})
    assert cfg.options["beta"] == 2.0
    assert isinstance(cfg.options["beta"], float)


def test_parse_config_flags_override_file(tmp_path):
    cfile = tmp_path / "c.json"
    cfile.write_text(json.dumps({"command": "gamma-closed",
                                 "options": {"beta": 1.0}, "seed": 5}))
    cfg = parse_config(["--config", str(cfile), "gamma-closed", "--beta", "2.0"])
    assert cfg.options["beta"] == 2.0
    assert cfg.seed == 5


def test_parse_config_command_mismatch(tmp_path):
    cfile = tmp_path / "c.json"
    cfile.write_text(json.dumps({"command": "sigma2-mc"}))
    with pytest.raises(ConfigError):
        parse_config(["--config", str(cfile), "gamma-closed"])


def test_threads_env(monkeypatch):
    cfg = ExperimentConfig.from_dict({"command": "gamma-closed"})
    monkeypatch.setenv("KPZTORUS_THREADS", "3")
    assert cfg.n_threads() == 3
    cfg.threads = 2
    assert cfg.n_threads() == 2


def test_run_writes_record_and_sidecars(tmp_path):
    cfg = ExperimentConfig.from_dict({"command": "gamma-closed",
                                      "outdir": str(tmp_path), "seed": 3})
    rec = run(cfg)
    assert rec.results["value"] == pytest.approx(-0.5 - 1 / 24)
    base = tmp_path / "gamma-closed-seed3"
    assert (tmp_path / "gamma-closed-seed3.json").exists()
    assert (tmp_path / "gamma-closed-seed3.config.json").exists()
    assert (tmp_path / "gamma-closed-seed3.log").exists()


def test_rerun_is_bit_identical(tmp_path):
    argv = ["gamma-bridge", "--n", "2000", "--seed", "11",
            "--outdir", str(tmp_path)]
    assert main(argv) == 0
    first = (tmp_path / "gamma-bridge-seed11.json").read_bytes()
    assert main(argv) == 0
    second = (tmp_path / "gamma-bridge-seed11.json").read_bytes()
    assert first == second


def test_main_exit_codes(tmp_path, capsys):
    assert main(["gamma-closed", "--outdir", str(tmp_path)]) == 0
    assert main(["gamma-closed", "--beta", "-1", "--outdir", str(tmp_path)]) == 2
    # config file problems are config errors too
    assert main(["--config", str(tmp_path / "missing.json"), "gamma-closed"]) == 2


def test_main_numerical_failure_exit_code(tmp_path):
    # a covariance table that cannot satisfy the truncation check
    spec_file = tmp_path / "cov.json"
    spec_file.write_text(json.dumps({"d": 1, "L": 1.0,
                                     "rhat": [1.0] * 9}))
    code = main(["gamma-expand", "--covariance", str(spec_file),
                 "--n-max", "4", "--outdir", str(tmp_path)])
    assert code == 3


def test_report_roundtrip(tmp_path):
    for seed, cmd in ((1, "gamma-closed"), (2, "gamma-bridge")):
        argv = [cmd, "--seed", str(seed), "--outdir", str(tmp_path)]
        if cmd == "gamma-bridge":
            argv += ["--n", "50000"]
        assert main(argv) == 0
    table = report(str(tmp_path))
    assert "gamma" in table
    assert "yes" in table  # the two routes agree at this sample size
    assert (tmp_path / "report.md").exists()
    assert (tmp_path / "report.csv").exists()


def test_report_empty_dir(tmp_path):
    with pytest.raises(ConfigError):
        report(str(tmp_path))


def test_report_schema_mismatch(tmp_path):
    (tmp_path / "x.json").write_text(json.dumps({"schema_version": "0",
                                                 "results": {}}))
    with pytest.raises(ConfigError):
        report(str(tmp_path))


def test_yor_command(tmp_path):
    assert main(["yor", "--lam", "1.0", "--z", "1.0",
                 "--outdir", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "yor-seed0.json").read_text())
    res = rec["results"]
    assert res["mass"] == pytest.approx(1.0, abs=1e-6)
    assert res["inv2_moment"] == pytest.approx(1 + 1 / 12, abs=1e-4)
    assert res["density_at_z"] > 0
