import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from uvolmax.cli import main

FAST_SCENARIOS = ["ex1_exponential", "log_fullspace", "indiff_cash",
                  "constrained_interval"]


def _run(scenario_dir, tmp_path, command, name, *flags):
    cfg = scenario_dir / f"{name}.json"
    return main([command, str(cfg), "--out-dir", str(tmp_path), "--quiet", *flags])


def _report(tmp_path, name):
    return json.loads((tmp_path / f"{name}.report.json").read_text())


def test_value_reports(scenario_dir, tmp_path):
    for name in FAST_SCENARIOS:
        assert _run(scenario_dir, tmp_path, "value", name) == 0
        rep = _report(tmp_path, name)
        assert rep["scenario"] == name
        assert rep["command"] == "value"
        assert "method" in rep and "reference_case" in rep
        assert np.isfinite(rep["result"]["y0"])


def test_value_known_numbers(scenario_dir, tmp_path):
    _run(scenario_dir, tmp_path, "value", "ex1_exponential")
    rep = _report(tmp_path, "ex1_exponential")
    assert rep["result"]["y0"] == pytest.approx(-0.04 / 0.18, abs=1e-12)
    assert rep["result"]["worst_path"]["values"] == [0.09]

    _run(scenario_dir, tmp_path, "value", "ex3_power_merton")
    rep = _report(tmp_path, "ex3_power_merton")
    assert rep["result"]["y0"] == pytest.approx(-0.04 / (4 * 0.09), abs=1e-12)

    _run(scenario_dir, tmp_path, "value", "log_fullspace")
    rep = _report(tmp_path, "log_fullspace")
    assert rep["result"]["value"] == pytest.approx(0.5, abs=1e-12)


def test_worst_vol_and_strategy_csv(scenario_dir, tmp_path):
    assert _run(scenario_dir, tmp_path, "worst-vol", "ex1_exponential") == 0
    lines = (tmp_path / "ex1_exponential.worst_vol.csv").read_text().splitlines()
    assert lines[0] == "t,a_star"
    assert float(lines[1].split(",")[1]) == 0.09

    assert _run(scenario_dir, tmp_path, "strategy", "ex1_exponential") == 0
    lines = (tmp_path / "ex1_exponential.strategy.csv").read_text().splitlines()
    assert lines[0] == "t,x,pi_star"
    # unconstrained cash position b / (beta a) at the band top
    assert float(lines[1].split(",")[2]) == pytest.approx(0.2 / 0.09, abs=1e-12)


def test_indiff_command(scenario_dir, tmp_path):
    assert _run(scenario_dir, tmp_path, "indiff", "indiff_cash") == 0
    rep = _report(tmp_path, "indiff_cash")
    assert rep["result"]["price"] == pytest.approx(0.5, abs=1e-12)


def test_minmax_command(scenario_dir, tmp_path):
    assert _run(scenario_dir, tmp_path, "minmax-check", "ex1_exponential") == 0
    rep = _report(tmp_path, "ex1_exponential")
    assert rep["result"]["gap"] <= 1e-12


def test_gen_eval_csv(scenario_dir, tmp_path):
    assert _run(scenario_dir, tmp_path, "gen-eval", "ex1_exponential",
                "--n-z", "5", "--n-a", "3") == 0
    lines = (tmp_path / "ex1_exponential.gen_eval.csv").read_text().splitlines()
    assert lines[0] == "z,a,F"
    assert len(lines) == 1 + 5 * 3
    z, a, f = map(float, lines[1].split(","))
    assert f == pytest.approx(0.2 * z + 0.04 / (2 * a), abs=1e-12)


def test_per_measure_command(scenario_dir, tmp_path):
    assert _run(scenario_dir, tmp_path, "per-measure", "ex1_exponential",
                "--constant-a", "0.05") == 0
    rep = _report(tmp_path, "ex1_exponential")
    assert rep["result"]["y0"] == pytest.approx(-0.04 / (2 * 0.05), abs=1e-12)

    assert _run(scenario_dir, tmp_path, "per-measure", "ex2_quadratic_payoff") == 0
    field = (tmp_path / "ex2_quadratic_payoff.per_measure.csv").read_text().splitlines()
    assert field[0] == "t,x,u,u_x"
    assert len(field) > 100


def test_convergence_command(scenario_dir, tmp_path):
    assert _run(scenario_dir, tmp_path, "convergence", "ex1_exponential") == 0
    lines = (tmp_path / "ex1_exponential.convergence.csv").read_text().splitlines()
    assert lines[0] == "scale,n_time,n_space,value,diff_to_finest"
    assert len(lines) == 3


def test_grid_scale_flag(scenario_dir, tmp_path):
    assert _run(scenario_dir, tmp_path, "value", "ex1_exponential",
                "--grid-scale", "2") == 0
    assert _report(tmp_path, "ex1_exponential")["grid_scale"] == 2


def test_config_errors_exit_3(tmp_path):
    missing = tmp_path / "nope.json"
    assert main(["value", str(missing)]) == 3

    bad_syntax = tmp_path / "bad.json"
    bad_syntax.write_text('{"market": {,}\n')
    assert main(["value", str(bad_syntax)]) == 3

    bad_band = tmp_path / "band.json"
    bad_band.write_text(json.dumps({
        "market": {"horizon": 1.0, "band": {"a_lo": 0.2, "a_hi": 0.1},
                   "drift": {"type": "constant", "b": 0.1},
                   "utility": {"type": "log"}}}))
    assert main(["value", str(bad_band)]) == 3

    bad_mode = tmp_path / "mode.json"
    bad_mode.write_text(json.dumps({
        "mode": "oracle",
        "market": {"horizon": 1.0, "band": {"a_lo": 0.1, "a_hi": 0.2},
                   "drift": {"type": "constant", "b": 0.1},
                   "utility": {"type": "log"}}}))
    assert main(["value", str(bad_mode)]) == 3


def test_config_error_message_is_line_anchored(tmp_path, capsys):
    bad = tmp_path / "syntax.json"
    bad.write_text('{\n  "market": [,]\n}\n')
    assert main(["value", str(bad)]) == 3
    err = capsys.readouterr().err
    assert "syntax.json:2:" in err


def test_module_entry_point(scenario_dir, tmp_path):
    cfg = scenario_dir / "ex1_exponential.json"
    proc = subprocess.run(
        [sys.executable, "-m", "uvolmax.cli", "value", str(cfg),
         "--out-dir", str(tmp_path), "--quiet"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "ex1_exponential.report.json").exists()


def test_reports_are_byte_identical(scenario_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["value", str(scenario_dir / "constrained_interval.json"),
                     "--out-dir", str(out), "--quiet"]) == 0
    assert (a / "constrained_interval.report.json").read_bytes() == \
        (b / "constrained_interval.report.json").read_bytes()
