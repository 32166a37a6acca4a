from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from mapmind.cli import cli_dispatch

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_validate_catalog_map(capsys):
    assert cli_dispatch(["validate", "Beijing", "--catalog"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["ok"] and doc["violations"] == []


def test_explore_is_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        assert cli_dispatch(["explore", "Paris", "--strategy", "NPS", "--seed", "7", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes() and a.stat().st_size > 0


def test_pipeline(tmp_path, capsys):
    trace, mem, tasks = tmp_path / "t.jsonl", tmp_path / "m.txt", tmp_path / "tasks.json"
    assert cli_dispatch(["explore", "Rome", "--out", str(trace)]) == 0
    assert cli_dispatch(["memorize", str(trace), "--kind", "GM+SDM", "--out", str(mem)]) == 0
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["kinds"] == ["GM", "SDM"] and manifest["size_bits"] == 8 * len(mem.read_bytes())
    assert cli_dispatch(["tasks", "Rome", "--seed", "3", "--out", str(tasks)]) == 0
    assert len(json.loads(tasks.read_text())) == 24


def test_ingest_round_trip(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert cli_dispatch(["ingest", "Vienna", "--out", str(out)]) == 0
    assert cli_dispatch(["validate", str(out), "--city", "Vienna"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["ok"]


def test_eval_and_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli_dispatch(["eval", "--config", str(CONFIGS / "phase1.toml"), "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["errors"] == 0 and summary["cells"] == 15 * 3 * 2
    rows = (out / "cells.csv").read_text().splitlines()
    oracle = [r for r in rows[1:] if ",oracle," in r]
    assert len(oracle) == 3 and all(r.endswith(",1.0") for r in oracle)
    before = (out / "cells.csv").read_bytes()
    (out / "cells.csv").unlink()
    assert cli_dispatch(["report", str(out)]) == 0
    assert (out / "cells.csv").read_bytes() == before


def test_errors_are_machine_readable(tmp_path, capsys):
    assert cli_dispatch(["memorize", str(tmp_path / "missing.jsonl")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["command"] == "memorize" and err["error"] and err["message"]
    assert cli_dispatch(["eval"]) == 1


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli_dispatch(["teleport"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli_dispatch(["explore", "Rome", "--strategy", "DFS"])
    assert exc.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mapmind", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
