import csv
import json

import numpy as np
import pytest

from ubf.cli import main
from ubf.config import ConfigError, from_dict, load_config
from ubf.sim import SimLog, emit_outputs, run_experiment


def _raw(config_dir, name="single_integrator.json"):
    return json.loads((config_dir / name).read_text())


def _header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def test_zero_duration_single_record(config_dir):
    raw = _raw(config_dir)
    raw["duration"] = 0.0
    log = run_experiment(from_dict(raw))
    assert len(log) == 1
    assert log.t[0] == 0.0
    np.testing.assert_array_equal(log.x[0], [0.5, 1.0])
    np.testing.assert_array_equal(log.u[0], [0.0, 0.0])


def test_step_count(config_dir):
    raw = _raw(config_dir)
    raw["duration"] = 0.1
    assert len(run_experiment(from_dict(raw))) == 11


def test_single_integrator_csv_schema(config_dir, tmp_path):
    raw = _raw(config_dir)
    raw["duration"] = 0.05
    cfg = from_dict(raw)
    emit_outputs(run_experiment(cfg), tmp_path, cfg, plots=False)
    assert _header(tmp_path / "trajectory.csv") == ["time", "x1", "x2"]
    assert _header(tmp_path / "control_inputs.csv") == ["time", "u1", "u2"]
    assert _header(tmp_path / "control_input_norm.csv") == ["time", "control_input_norm"]
    assert _header(tmp_path / "ubfs.csv") == ["time", "h", "Pi1", "Pi2"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["steps"] == 6


def test_quadrotor_trajectory_has_13_columns(config_dir, tmp_path):
    raw = _raw(config_dir, "quadrotor.json")
    raw["duration"] = 0.01
    cfg = from_dict(raw)
    emit_outputs(run_experiment(cfg), tmp_path, cfg, plots=False)
    assert len(_header(tmp_path / "trajectory.csv")) == 13
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert all(len(r) == 13 for r in rows)


def test_empty_log_header_only(tmp_path):
    log = SimLog(np.zeros(0), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)),
                 np.zeros((0, 1)), np.zeros((0, 1)), ["S1"])
    files = emit_outputs(log, tmp_path, plots=True)
    for p in files:
        if p.suffix == ".csv":
            assert len(p.read_text().splitlines()) == 1
    assert not list(tmp_path.glob("*.svg"))


def test_deterministic_outputs(config_dir, tmp_path):
    raw = _raw(config_dir)
    raw["duration"] = 0.3
    for d in ("a", "b"):
        cfg = from_dict(raw)
        emit_outputs(run_experiment(cfg), tmp_path / d, cfg, plots=True)
    for name in ("trajectory.csv", "control_inputs.csv", "control_input_norm.csv", "ubfs.csv", "leaves.csv",
                 "auxiliary_inputs.csv", "trajectory.svg", "ubf.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_config_rejects_start_inside_obstacle(config_dir):
    raw = _raw(config_dir)
    raw["x0"] = [3.0, 3.0]
    with pytest.raises(ConfigError, match="S1"):
        from_dict(raw)


@pytest.mark.parametrize("patch, msg", [
    ({"colour": 1}, "unknown"),
    ({"beta": -1.0}, "beta"),
    ({"m": 3}, "depth"),
    ({"x0": [0.5]}, "x0"),
    ({"specification": "S1 & S9"}, "specification"),
    ({"u0": "random"}, "u0"),
])
def test_config_errors(config_dir, patch, msg):
    raw = _raw(config_dir)
    raw.update(patch)
    with pytest.raises(ConfigError, match=msg):
        from_dict(raw)


def test_shipped_configs_load(config_dir):
    for p in sorted(config_dir.glob("*.json")):
        cfg = load_config(p)
        assert cfg.spec.n_leaves == 3


# -- CLI -----------------------------------------------------------------------

def test_cli_run_single_integrator(config_dir, tmp_path, capsys):
    code = main(["run", str(config_dir / "single_integrator.json"), "--out", str(tmp_path), "--quiet"])
    out = capsys.readouterr().out
    assert code == 0, out
    assert "PASS  goal_reached" in out
    assert (tmp_path / "trajectory.csv").exists()
    assert (tmp_path / "trajectory.svg").exists()


def test_cli_check_example_spec(capsys):
    assert main(["check", "S1 | S2 & S3 & S4 & S5 | S6 & U1 | U2"]) == 0
    out = capsys.readouterr().out
    assert "L = 5" in out
    assert "P = {1,5,7}, Q = {2,3,4,6}" in out


def test_cli_check_config_reports_degrees(config_dir, capsys):
    assert main(["check", str(config_dir / "double_integrator.json")]) == 0
    out = capsys.readouterr().out
    assert "leaf S1: kind state, relative degree 2" in out
    assert "leaf U1: kind input, relative degree 1" in out


def test_cli_unknown_subcommand():
    assert main(["frobnicate"]) == 2


def test_cli_no_arguments():
    assert main([]) == 2


def test_cli_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    assert main(["check", str(tmp_path / "missing.json")]) == 2
    assert main(["check", "S1 | | S2"]) == 2


def test_cli_robinson(capsys):
    assert main(["robinson"]) == 0
    assert "PASS  robinson lipschitz ratio" in capsys.readouterr().out


def test_cli_props_json(capsys):
    assert main(["props", "--json"]) == 0
    out = capsys.readouterr().out
    payload = json.loads(out[out.index("["):])
    assert {r["name"] for r in payload} >= {"lse sandwich", "qp oracle", "robinson minimizer"}
