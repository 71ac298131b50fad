from __future__ import annotations

import csv
import json

import pytest
import yaml

from decouple import benchmarks
from decouple.cli import build_parser, run
from decouple.io import emit_report


def _json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_regime_reports_horizon(tmp_path):
    assert run(["regime", "--benchmark", "scalar-lq", "--out-dir", str(tmp_path)]) == 0
    out = _json(tmp_path / "regime.json")
    assert out["schema"] == 1
    assert out["h_limit"] == pytest.approx(0.5809, abs=1e-3)
    assert out["h_max"] < out["h_limit"]
    assert len(out["layers"]) == 3


def test_solve_zero_state_writes_zero_trajectory(tmp_path):
    assert run(["solve", "--benchmark", "diag-lq", "--x", "0", "--out-dir", str(tmp_path)]) == 0
    with open(tmp_path / "solve_trajectory.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["s", "y_1", "y_2", "z_1", "z_2", "u_1", "u_2"]
    assert all(float(v) == 0.0 for row in rows[1:] for v in row[1:])
    report = _json(tmp_path / "solve.json")
    assert len(rows) - 1 == report["nodes"]
    assert report["value"] == 0.0


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["solve", "--benchmark", "saturating", "--x", "0.5,-1",
                    "--out-dir", str(d)]) == 0
    for name in ("solve.json", "solve_trajectory.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_file_and_errors(tmp_path):
    cfg = tmp_path / "p.yaml"
    cfg.write_text(yaml.safe_dump(benchmarks.PROBLEMS["scalar-lq"]))
    assert run(["solve", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    assert _json(tmp_path / "solve.json")["gamma"][0] == pytest.approx(0.913671, abs=1e-5)

    assert run(["solve", "--config", str(tmp_path / "missing.yaml"),
                "--out-dir", str(tmp_path)]) == 1
    assert run(["solve", "--benchmark", "nope", "--out-dir", str(tmp_path)]) == 1
    assert run(["solve", "--benchmark", "diag-lq", "--x", "1,2,3",
                "--out-dir", str(tmp_path)]) == 1
    assert run(["solve", "--benchmark", "scalar-lq", "--steps", "16",
                "--out-dir", str(tmp_path)]) == 1


def test_regime_infeasible_exit_code(tmp_path):
    cfg = dict(benchmarks.PROBLEMS["scalar-lq"], constants={"b": 1.0})
    path = tmp_path / "weak.json"
    path.write_text(json.dumps(cfg))
    assert run(["solve", "--config", str(path), "--out-dir", str(tmp_path)]) == 3


def test_domain_failure_exit_code(tmp_path):
    path = tmp_path / "big.json"
    path.write_text(json.dumps({"dim": 4, "running_cost": {"Q": 1.0},
                                "terminal_cost": {"Q": 0.5}, "T": 1.0}))
    assert run(["solve", "--config", str(path), "--strategy", "interpolated",
                "--out-dir", str(tmp_path)]) == 2


def test_verify_and_mfc(tmp_path):
    assert run(["verify", "--benchmark", "scalar-lq", "--out-dir", str(tmp_path)]) == 0
    assert _json(tmp_path / "verify.json")["passed"] is True
    assert run(["mfc", "--t", "0.5", "--checks", "1", "--out-dir", str(tmp_path)]) == 0
    out = _json(tmp_path / "mfc.json")
    assert out["N"] == 8 and out["residual"] < 1e-3
    assert out["gradient_checks"][0]["rel_error"] < 1e-4


def test_bench_table(tmp_path, capsys):
    assert run(["bench", "--out-dir", str(tmp_path)]) == 0
    rows = _json(tmp_path / "bench.json")["rows"]
    assert [r["benchmark"] for r in rows] == list(benchmarks.PROBLEMS)
    for r in rows:
        assert abs(r["transcription_value"] - r["solver_value"]) < 1e-3
        if r["riccati_value"] is not None:
            assert r["riccati_value"] == pytest.approx(r["solver_value"], abs=1e-6)
    assert "riccati_value" in capsys.readouterr().out


def test_empty_report_is_valid_json(tmp_path):
    emit_report(tmp_path, "empty", {"rows": []})
    assert _json(tmp_path / "empty.json") == {"schema": 1, "rows": []}


def test_help_documents_every_flag():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    for name, p in sub.items():
        for action in p._actions:
            assert action.help, f"{name}: {action.option_strings} lacks help"
