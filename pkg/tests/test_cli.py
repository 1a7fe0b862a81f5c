from __future__ import annotations

import json
from pathlib import Path

from molesim.cli import main

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parents[1] / "src" / "molesim" / "data"


def test_unknown_condition_is_usage_error(tmp_path, capsys):
    assert main(["run", "--condition", "C9", "--seed", "0", "--out", str(tmp_path)]) == 1


def test_missing_subcommand_is_usage_error(capsys):
    assert main([]) == 1


def test_run_writes_artifacts(tmp_path, capsys):
    rc = main(["run", "--condition", "C4", "--seed", "1", "--roster-size", "20", "--out", str(tmp_path)])
    assert rc == 0
    rd = tmp_path / "runs" / "C4-s001"
    assert {p.name for p in rd.iterdir()} == {"telemetry.jsonl", "snapshots.csv", "run.json", "provenance.json"}
    prov = json.loads((rd / "provenance.json").read_text())
    assert {"code_version", "config_sha256"} <= prov.keys()
    assert "VALID" in capsys.readouterr().out


def test_seed_18_collision_exit_codes(tmp_path, capsys):
    args = ["run", "--condition", "C2", "--seed", "18", "--out", str(tmp_path)]
    assert main(args) == 3
    assert "preflight" in capsys.readouterr().err
    assert main(args + ["--allow-collision"]) == 0
    meta = json.loads((tmp_path / "runs" / "C2-s018" / "run.json").read_text())
    assert meta["validity"] == "INVALID_DEV3" and meta["event_count"] == 9920


def test_env_and_config_fallbacks(tmp_path, monkeypatch, capsys):
    conf = tmp_path / "conf.yaml"
    conf.write_text("roster_size: 20\nseed: 5\n")
    monkeypatch.setenv("MOLESIM_SEED", "7")
    rc = main(["--config", str(conf), "run", "--condition", "C5", "--out", str(tmp_path / "o")])
    assert rc == 0
    # env beats the config file; the file still supplies roster_size
    meta = json.loads((tmp_path / "o" / "runs" / "C5-s007" / "run.json").read_text())
    assert meta["roster_size"] == 20
    rc = main(["--config", str(conf), "run", "--condition", "C5", "--seed", "2", "--out", str(tmp_path / "o")])
    assert rc == 0 and (tmp_path / "o" / "runs" / "C5-s002").exists()


def test_bad_config_file(tmp_path, capsys):
    conf = tmp_path / "c.yaml"
    conf.write_text("- not a mapping\n")
    assert main(["--config", str(conf), "verify", "--lock", "x"]) == 1


def test_verify_bundled_lock(capsys):
    assert main(["verify", "--lock", str(DATA / "artifacts.lock")]) == 0


def test_verify_mismatch_and_missing(tmp_path, capsys):
    f = tmp_path / "a.txt"
    f.write_text("one\n")
    lock = tmp_path / "artifacts.lock"
    assert main(["verify", "--lock", str(lock)]) == 2
    assert main(["verify", "--lock", str(lock), "--write", str(f)]) == 0
    assert main(["verify", "--lock", str(lock)]) == 0
    f.write_text("two\n")
    assert main(["verify", "--lock", str(lock)]) == 2
    assert "MISMATCH" in capsys.readouterr().out


def test_report_from_statistics(tmp_path, capsys):
    out = tmp_path / "report.md"
    assert main(["report", "--stats", str(FIXTURES / "reported_statistics.json"), "--out", str(out)]) == 0
    text = out.read_text()
    assert "NOT_SUPPORTED" in text and "PENDING" in text


def test_report_needs_input(capsys):
    assert main(["report"]) == 1


def test_campaign_audit_analyze_round_trip(tmp_path, capsys):
    camp = tmp_path / "camp"
    rc = main(["campaign", "--out", str(camp), "--seeds", "0-1", "--roster-size", "20", "--workers", "1",
               "--abort", "C3-s001:63"])
    assert rc == 0
    slots = tmp_path / "ratings.csv"
    assert main(["audit", "sample", str(camp), "--out", str(slots)]) == 0
    lines = slots.read_text().splitlines()
    assert len(lines) == 1 + 4 * 5
    slots.write_text("\n".join([lines[0]] + [line + "4" for line in lines[1:]]) + "\n")
    assert main(["audit", "ingest", str(camp), "--ratings", str(slots)]) == 0
    assert '"status": "complete"' in capsys.readouterr().out
    assert main(["analyze", str(camp), "--ratings", str(slots)]) == 0
    report = json.loads((camp / "analysis" / "report.json").read_text())
    assert len(report["verdicts"]) == 8
    assert main(["report", str(camp / "analysis" / "report.json")]) == 0


def test_analyze_missing_enron_is_fault(tmp_path, capsys):
    camp = tmp_path / "camp"
    main(["campaign", "--out", str(camp), "--seeds", "0", "--conditions", "C5", "--roster-size", "20", "--workers", "1"])
    assert main(["analyze", str(camp), "--enron", str(tmp_path / "nope.txt")]) == 3
