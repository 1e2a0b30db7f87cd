import json

import pytest

from autoserve.cli import main
from autoserve.wire import NodeState, SystemStateUpdate, encode_frame

BASE_CONFIG = {
    "n_uavs": 1,
    "n_lps": 1,
    "duration_s": 900,
    "seed": 3,
    "spawn_radius_m": 0.0,
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "network.json"
    path.write_text(json.dumps(BASE_CONFIG))
    return str(path)


def test_run_pass_exit_code_and_outputs(tmp_path, config_path, capsys):
    report_path = tmp_path / "report.json"
    trace_path = tmp_path / "trace.jsonl"
    code = main(
        [
            "run",
            "--config",
            config_path,
            "--trace",
            str(trace_path),
            "--report",
            str(report_path),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "outcome=PASS" in out
    report = json.loads(report_path.read_text())
    assert report["outcome"] == "PASS"
    assert report["config"]["n_uavs"] == 1
    first_line = trace_path.read_text().splitlines()[0]
    assert "header" in json.loads(first_line)


def test_run_fail_exit_code(tmp_path, capsys):
    path = tmp_path / "doomed.json"
    path.write_text(
        json.dumps(
            {
                "n_uavs": 1,
                "n_lps": 1,
                "duration_s": 20,
                "consumption_pct_per_s": [4.9, 5.0],
                "initial_battery_pct": [16.0, 16.0],
                "spawn_radius_m": 0.0,
            }
        )
    )
    assert main(["run", "--config", str(path)]) == 2
    assert "outcome=FAIL" in capsys.readouterr().out


def test_run_invalid_config_exit_code(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"n_uavs": 0}))
    assert main(["run", "--config", str(path)]) == 1
    assert "autoserve-sim:" in capsys.readouterr().err


def test_run_unknown_key_exit_code(tmp_path):
    path = tmp_path / "typo.json"
    path.write_text(json.dumps({"n_uav": 3}))
    assert main(["run", "--config", str(path)]) == 1


def test_missing_config_file_exit_code():
    assert main(["run", "--config", "/nonexistent/net.json"]) == 1


def test_usage_error_exit_code(capsys):
    assert main(["run", "--bogus-flag"]) == 1
    assert "error" in capsys.readouterr().err


def test_flag_overrides_config(tmp_path, config_path, capsys):
    report_path = tmp_path / "r.json"
    code = main(
        [
            "run",
            "--config",
            config_path,
            "--uavs",
            "2",
            "--duration",
            "60",
            "--seed",
            "11",
            "--report",
            str(report_path),
        ]
    )
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["config"]["n_uavs"] == 2
    assert report["config"]["duration_s"] == 60
    assert report["config"]["seed"] == 11


def test_run_without_config_uses_defaults(capsys):
    assert main(["run", "--uavs", "1", "--duration", "30"]) == 0
    assert "outcome=" in capsys.readouterr().out


def test_sweep_prints_pass_rate_and_distribution(tmp_path, config_path, capsys):
    report_path = tmp_path / "sweep.json"
    code = main(
        [
            "sweep",
            "--config",
            config_path,
            "--seeds",
            "3",
            "--duration",
            "120",
            "--report",
            str(report_path),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "pass=3/3" in out
    assert "fleet_min_battery_pct:" in out
    summary = json.loads(report_path.read_text())
    assert summary["total"] == 3
    assert [run["seed"] for run in summary["runs"]] == [3, 4, 5]


def test_dump_prints_fields(capsys):
    frame = encode_frame(SystemStateUpdate(state=NodeState.IDLE), 0, 1, 1)
    assert main(["dump", frame.hex()]) == 0
    out = capsys.readouterr().out
    assert "msg_type=SystemStateUpdate" in out
    assert "sys_id=1" in out


def test_dump_bad_hex(capsys):
    assert main(["dump", "zz"]) == 1


def test_dump_truncated_frame(capsys):
    assert main(["dump", "fd01"]) == 1
    assert "autoserve-sim:" in capsys.readouterr().err
