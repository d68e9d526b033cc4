import json

import pytest

from loewnerqc.config import parse_config, validate_config, ConfigError
from loewnerqc.scenarios import builtin_scenario, scenario_names, builtin_document
from loewnerqc.cli import run_pipeline, main


def test_minimal_config_fills_defaults(tmp_path):
    doc = {"p": {"kind": "constant", "value": 1.0},
           "tau": {"kind": "constant", "value": 0.0},
           "time": {"t_end": 1.0}}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    cfg = parse_config(path)
    assert cfg.time.t_end == 1.0
    assert cfg.criteria.k == 0.5
    assert cfg.grid.theta_nodes == 256
    assert cfg.q is None


def test_invalid_k_reports_field_path():
    cfg, errors = validate_config({"criteria": {"k": 1.2}})
    assert any("criteria.k must lie in [0,1)" in e for e in errors)


def test_unsorted_step_breakpoints_named():
    cfg, errors = validate_config(
        {"tau": {"kind": "step", "breakpoints": [2.0, 1.0], "values": [0, 0.1, 0.2]}})
    assert any("tau.breakpoints" in e for e in errors)


def test_errors_are_aggregated_not_fail_fast():
    cfg, errors = validate_config({
        "p": {"kind": "mystery"},
        "criteria": {"k": 1.5},
        "time": {"t_end": -1},
    })
    assert len(errors) >= 3


def test_parse_config_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/path.json")


def test_builtin_registry_complete():
    names = scenario_names()
    for expected in ("exponential", "chordal", "rotation", "becker",
                     "sector", "measurable-tau", "step-tau"):
        assert expected in names
    for n in names:
        cfg = builtin_scenario(n)
        assert cfg.name == n


def test_builtin_documents_validate():
    for n in scenario_names():
        cfg, errors = validate_config(builtin_document(n), name=n)
        assert not errors, f"{n}: {errors}"


def test_run_pipeline_check_writes_summary(tmp_path):
    cfg = builtin_scenario("exponential")
    code, summary = run_pipeline(cfg, "check", tmp_path)
    assert code == 0 and summary["pass"]
    data = json.loads((tmp_path / "summary.json").read_text())
    assert data["scenario"] == "exponential"
    assert data["command"] == "check"
    assert set(data) >= {"scenario", "command", "pass", "metrics", "warnings", "runtime_ms"}


def test_run_pipeline_check_fails_for_rotation():
    # Becker ratio is 1 for p = i: the check command must exit nonzero
    import tempfile
    cfg = builtin_scenario("rotation")
    with tempfile.TemporaryDirectory() as d:
        code, summary = run_pipeline(cfg, "check", d)
    assert code == 1
    assert summary["metrics"]["becker_max_ratio"] == pytest.approx(1.0)
    assert summary["metrics"]["degenerate_rotation_only"] is True


def test_run_pipeline_extend_skips_rotation(tmp_path):
    cfg = builtin_scenario("rotation")
    code, summary = run_pipeline(cfg, "extend", tmp_path)
    assert code == 0 and summary["pass"]
    assert summary["metrics"]["degenerate"] is True
    assert any("skipped" in w for w in summary["warnings"])


def test_run_pipeline_evolve_artifacts(tmp_path):
    cfg = builtin_scenario("exponential")
    code, summary = run_pipeline(cfg, "evolve", tmp_path)
    assert code == 0
    csv_path = tmp_path / "trajectories.csv"
    header = csv_path.read_text().splitlines()[0]
    assert header == ("seed_index,re_z0,im_z0,t,re_phi,im_phi,"
                      "re_dphi,im_dphi,truncated_flag")


def test_run_pipeline_deterministic_artifacts(tmp_path):
    cfg = builtin_scenario("exponential")
    d1, d2 = tmp_path / "a", tmp_path / "b"
    run_pipeline(cfg, "range", d1)
    run_pipeline(builtin_scenario("exponential"), "range", d2)
    a = json.loads((d1 / "summary.json").read_text())
    b = json.loads((d2 / "summary.json").read_text())
    a.pop("runtime_ms"), b.pop("runtime_ms")
    assert a == b
    assert (d1 / "beta_history.csv").read_bytes() == (d2 / "beta_history.csv").read_bytes()


def test_cli_main_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"criteria": {"k": 2.0}}))
    code = main(["check", "--config", str(bad), "--out", str(tmp_path)])
    assert code == 2


def test_cli_main_k_override(tmp_path):
    code = main(["check", "--scenario", "exponential", "--out", str(tmp_path),
                 "--k", "0.25"])
    assert code == 0


def test_cli_main_unknown_scenario(tmp_path):
    code = main(["check", "--scenario", "not-real", "--out", str(tmp_path)])
    assert code == 2


def test_range_classifications(tmp_path):
    code, s = run_pipeline(builtin_scenario("exponential"), "range", tmp_path / "e")
    assert s["metrics"]["classification"] == "plane"
    code, s = run_pipeline(builtin_scenario("rotation"), "range", tmp_path / "r")
    assert s["metrics"]["classification"] == "disk"
    assert s["metrics"]["radius"] == pytest.approx(1.0, abs=1e-6)
