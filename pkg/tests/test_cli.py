"""Command line entry points and exit codes."""
from __future__ import annotations

import json
import subprocess
import sys

import pytest

from sisei import cli
from sisei.driver import TIMESERIES_HEADER, read_timeseries

COARSE_MESH = {"n_elem_particle": 12, "n_elem_sei": 2}


def _config(tmp_path, **fields):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"mesh": COARSE_MESH, **fields}))
    return str(path)


@pytest.fixture(scope="module")
def gsv_config(tmp_path_factory):
    return _config(tmp_path_factory.mktemp("gsv"), strain_mode="gsv", name="gsv")


def test_config_error_exit_code(tmp_path, capsys):
    bad = _config(tmp_path, strain_mode="gsv", plasticity_mode="viscoplastic")
    assert cli.main(["run", "--config", bad, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    missing = str(tmp_path / "none.json")
    assert cli.main(["run", "--config", missing]) == cli.EXIT_CONFIG


def test_abort_is_nonzero_unless_expected(gsv_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "--config", gsv_config, "--out", str(out)]) == cli.EXIT_ABORTED
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["status"] == "aborted" and 0.2 <= summary["abort_soc"] <= 0.5
    assert cli.main(["run", "--config", gsv_config, "--out", str(out),
                     "--expect-abort"]) == cli.EXIT_OK
    events = [json.loads(line) for line in (out / "events.jsonl").read_text().splitlines()]
    assert any(e["type"] == "abort" and "soc" in e for e in events)
    assert (out / "timeseries.csv").read_text().splitlines()[0] == ",".join(TIMESERIES_HEADER)
    assert {p.name for p in out.iterdir()} >= {"timeseries.csv", "events.jsonl", "plot.gp",
                                               "profile_abort.csv"}


def test_completed_run_exit_zero(tmp_path, capsys):
    cfg = _config(tmp_path, half_cycles=1, half_cycle_duration_h=0.1,
                  plasticity_mode="rate_independent")
    out = tmp_path / "run"
    assert cli.main(["run", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
    rows = read_timeseries(out / "timeseries.csv")
    assert rows[-1][0] == 0.1
    assert (out / "profile_final.csv").exists() and (out / "profile_hc1.csv").exists()


def test_matrix_writes_all_runs(tmp_path, capsys):
    cfg = _config(tmp_path, half_cycles=2, half_cycle_duration_h=0.45)
    out = tmp_path / "m"
    assert cli.main(["matrix", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert [s["status"] for s in summary] == ["aborted"] + ["completed"] * 4
    for s in summary:
        assert (out / s["name"] / "timeseries.csv").exists()


def test_check_subcommand(capsys):
    assert cli.main(["check", "--seed", "3"]) == cli.EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_parser_rejects_unknown_profile():
    with pytest.raises(SystemExit):
        cli.main(["run", "--profile", "huge"])


def test_console_script_entry_point(tmp_path):
    bad = _config(tmp_path, colour="red")
    proc = subprocess.run([sys.executable, "-m", "sisei.cli", "run", "--config", bad],
                          capture_output=True, text=True)
    assert proc.returncode == cli.EXIT_CONFIG
    assert "colour" in proc.stderr
