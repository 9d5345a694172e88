import json

import pytest

from app import EXIT_INVALID, EXIT_OK, EXIT_VIOLATION, main
from utils.config import SCENARIO_DIR

HONEST = str(SCENARIO_DIR / "01_honest_adjudicated.json")


def test_run_writes_trace_and_report(tmp_path, capsys):
    trace_path, report_path = tmp_path / "trace.jsonl", tmp_path / "out" / "report.jsonl"
    code = main(["run", HONEST, "--trace", str(trace_path), "--report", str(report_path)])
    assert code == EXIT_OK
    assert "01_honest_adjudicated" in capsys.readouterr().out

    events = [json.loads(line) for line in trace_path.read_text().splitlines()]
    assert [e["seq"] for e in events] == sorted(e["seq"] for e in events)
    rows = [json.loads(line) for line in report_path.read_text().splitlines()]
    assert {row["label"] for row in rows} == {"provider", "alice", "bob", "carol"}
    assert all(row["verdict"] == "protected" for row in rows)


def test_run_over_the_whole_corpus(tmp_path):
    report_path = tmp_path / "all.jsonl"
    assert main(["run", str(SCENARIO_DIR), "--report", str(report_path)]) == EXIT_OK
    scenarios = {json.loads(line)["scenario"] for line in report_path.read_text().splitlines()}
    assert len(scenarios) >= 20


def test_trace_needs_a_single_scenario(tmp_path):
    assert main(["run", str(SCENARIO_DIR), "--trace", str(tmp_path / "t.jsonl")]) == EXIT_INVALID


def test_invalid_scenario_exits_with_two(tmp_path, capsys):
    raw = json.loads((SCENARIO_DIR / "01_honest_adjudicated.json").read_text(encoding="utf-8"))
    raw["deadlines"]["tau2"] = raw["deadlines"]["tau1"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw), encoding="utf-8")
    assert main(["run", str(bad)]) == EXIT_INVALID
    assert "deadlines.tau2" in capsys.readouterr().err


def test_schema_error_names_the_field(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"deadlines": {"tau1": 10, "tau2": 20}}), encoding="utf-8")
    assert main(["run", str(bad)]) == EXIT_INVALID
    assert "guaranty" in capsys.readouterr().err


def test_violation_exits_with_one(monkeypatch):
    monkeypatch.setattr("agents.ladder.ladder_split", lambda price, e, confirmed: (0, price))
    assert main(["run", str(SCENARIO_DIR / "12_honest_ladder.json")]) == EXIT_VIOLATION


def test_verify_and_fuzz(capsys):
    assert main(["verify", HONEST]) == EXIT_OK
    assert "engine matches oracle" in capsys.readouterr().out
    assert main(["fuzz", "--seed", "3", "--count", "25"]) == EXIT_OK
    assert "25/25" in capsys.readouterr().out


def test_verify_agrees_with_the_engine_on_the_whole_corpus(capsys):
    assert main(["verify"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "MISMATCH" not in out
    assert "01_honest_adjudicated: engine matches oracle on 3 bids, 2 winners, revenue 6" in out
    assert "14_ladder_stop_after_segment: engine matches oracle" in out


def test_bench_writes_its_table(tmp_path):
    out = tmp_path / "bench.jsonl"
    code = main(["bench", "--min-users", "2", "--max-users", "4", "--step", "2",
                 "--types", "1,2", "--repeat", "1", "--out", str(out)])
    assert code == EXIT_OK
    assert len(out.read_text().splitlines()) == 4


def test_bad_env_setting_exits_with_two(monkeypatch):
    monkeypatch.setenv("FAIRAUCTION_HASH_ALGORITHM", "rot13")
    assert main(["fuzz", "--count", "1"]) == EXIT_INVALID


def test_command_is_required():
    with pytest.raises(SystemExit):
        main([])
