from __future__ import annotations

import json

import pytest

from mapmind.harness import (
    CSV_HEADER,
    AggregateRow,
    ExperimentConfig,
    ExperimentError,
    ItemRecord,
    RunResult,
    aggregate,
    cells_csv,
    derive_seed,
    emit_reports,
    iter_cells,
    load_results,
    memsize_csv,
    parse_cells_csv,
    run_matrix,
    trace_seed,
)
from mapmind.reason import ScriptedOracle, ScriptedRandom
from mapmind.tasks import CATEGORIES

CONFIG = """
[run]
name = "mini"
seed = 11
n = 1

[cities]
names = ["Beijing", "Paris"]

[matrix]
phase = "II"
memories = ["SDM", "NSM+SDM"]

[endpoint.oracle]
kind = "scripted-oracle"

[endpoint.random]
kind = "scripted-random"
seed = 2

[limits]
in_flight = 2
"""


class Counting:
    """Wraps an endpoint and counts calls."""

    def __init__(self, inner):
        self.inner = inner
        self.name, self.kind, self.max_attempts = inner.name, inner.kind, 1
        self.temperature = 0.0
        self.count = 0

    def complete(self, messages, *, temperature, task=None):
        self.count += 1
        return self.inner.complete(messages, temperature=temperature, task=task)


def _endpoints():
    return {"oracle": Counting(ScriptedOracle()), "random": Counting(ScriptedRandom(seed=2))}


def test_config_from_toml():
    cfg = ExperimentConfig.from_toml(CONFIG)
    assert cfg.cities == ["Beijing", "Paris"]
    assert cfg.strategies == ["NPS"] and cfg.memories == ["SDM", "NSM+SDM"] and cfg.schemes == ["DT"]
    assert [e["name"] for e in cfg.endpoints] == ["oracle", "random"]
    assert (cfg.seed, cfg.in_flight, cfg.run_id) == (11, 2, "mini")
    assert len(list(iter_cells(cfg))) == 2 * 2 * 2


def test_phase_presets():
    one, two, three = (ExperimentConfig.preset(p) for p in ("I", "II", "III"))
    assert (one.strategies, one.memories, one.schemes) == (["NPS", "RVS", "TDS"], ["SDM"], ["DT"])
    assert two.strategies == ["NPS"] and len(two.memories) == 7 and two.schemes == ["DT"]
    assert (three.strategies, three.memories, three.schemes) == (["NPS"], ["NSM"], ["DT", "CoT", "SC_CoT", "ToT"])
    assert len(one.cities) == 15


@pytest.mark.parametrize("kw", [{"strategies": []}, {"memories": ["XM"]}, {"n": 0}, {"seed": -1},
                                {"endpoints": [{"name": "a"}, {"name": "a"}]}])
def test_bad_configs(kw):
    with pytest.raises(ExperimentError):
        ExperimentConfig(**kw)


def test_bad_toml():
    with pytest.raises(ExperimentError):
        ExperimentConfig.from_toml("[run\n")
    with pytest.raises(ExperimentError):
        ExperimentConfig.from_toml("[matrix]\nshape = 1\n")


def test_seeds_are_cell_local():
    cfg = ExperimentConfig(seed=5)
    wide = ExperimentConfig(seed=5, strategies=["NPS", "RVS"])
    assert trace_seed(cfg, "Beijing", "NPS", 0) == trace_seed(wide, "Beijing", "NPS", 0)
    assert trace_seed(cfg, "Beijing", "NPS", 0) != trace_seed(cfg, "Paris", "NPS", 0)
    assert 0 <= derive_seed(5, "x") < 2 ** 64


def test_resume_makes_no_calls(tmp_path):
    cfg = ExperimentConfig.from_toml(CONFIG)
    eps = _endpoints()
    first = run_matrix(cfg, tmp_path, eps)
    assert eps["oracle"].count > 0
    again = _endpoints()
    second = run_matrix(cfg, tmp_path, again)
    assert again["oracle"].count == again["random"].count == 0
    assert [r.to_dict() for r in first] == [r.to_dict() for r in second]


def test_oracle_scores_full_and_random_does_not(tmp_path):
    results = run_matrix(ExperimentConfig.from_toml(CONFIG), tmp_path, _endpoints())
    for r in results:
        assert r.error is None
        if r.endpoint == "oracle":
            assert r.total_accuracy == 1.0
        assert len(r.items) + sum(r.degenerate.values()) == 24
    assert any(r.total_accuracy < 1 for r in results if r.endpoint == "random")


def test_interrupted_run_resumes_identically(tmp_path):
    cfg = ExperimentConfig.from_toml(CONFIG)
    whole = run_matrix(cfg, tmp_path / "a", _endpoints())
    seen = []

    def stop(res):
        seen.append(res)
        if len(seen) == 3:
            raise KeyboardInterrupt

    with pytest.raises(KeyboardInterrupt):
        run_matrix(cfg, tmp_path / "b", _endpoints(), progress=stop)
    eps = _endpoints()
    resumed = run_matrix(cfg, tmp_path / "b", eps)
    assert [r.to_dict() for r in resumed] == [r.to_dict() for r in whole]
    emit_reports(whole, tmp_path / "a")
    emit_reports(resumed, tmp_path / "b")
    for name in ("cells.csv", "items.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def _row(tally, deg=None):
    return AggregateRow("NPS", "SDM", "DT", "x", tally, deg or {c: 0 for c in CATEGORIES}, 100.0, 15)


def test_aggregate_arithmetic():
    tally = {"DJ": (110, 120), "DS": (30, 60), "PJ": (45, 60), "PDR": (0, 0), "PP": (20, 60)}
    row = _row(tally)
    assert f"{100 * row.accuracy['DJ']:.2f}%" == "91.67%"
    assert row.accuracy["PDR"] is None
    n = sum(v[1] for v in tally.values())
    weighted = sum(row.accuracy[c] * tally[c][1] for c in tally if tally[c][1]) / n
    assert row.total == pytest.approx(weighted)
    text = cells_csv([row])
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert "n/a" in text.splitlines()[1]
    back = parse_cells_csv(text)[("NPS", "SDM", "DT", "x")]
    assert back == {**row.accuracy, "total": row.total}


def _result(city, correct):
    items = [ItemRecord(f"{city}-{c}-{k}", c, "A", "A" if ok else "B", ok, False)
             for k, (c, ok) in enumerate(correct)]
    return RunResult(city, "NPS", "GM", "DT", "x", 0, 1, 800, items, {c: 0 for c in CATEGORIES})


def test_pooling_and_closure():
    a = _result("A", [("DJ", True), ("DJ", False), ("PP", True)])
    b = _result("B", [("DJ", True), ("DS", True)])
    (row,) = aggregate([a, b])
    assert row.tally["DJ"] == (2, 3) and row.tally["PP"] == (1, 1) and row.tally["PJ"] == (0, 0)
    assert row.total == pytest.approx(4 / 5)
    for r in (a, b):
        k = sum(v[0] for v in r.tally().values())
        n = sum(v[1] for v in r.tally().values())
        assert r.total_accuracy == k / n
    assert RunResult.from_dict(json.loads(json.dumps(a.to_dict()))) == a


def test_reports_written(tmp_path):
    results = run_matrix(ExperimentConfig.from_toml(CONFIG), tmp_path, _endpoints())
    files = emit_reports(results, tmp_path)
    assert set(files) == {"cells.csv", "cells_by_city.csv", "items.jsonl", "memsize.csv", "summary.md"}
    parsed = parse_cells_csv(files["cells.csv"].read_text())
    for row in aggregate(results):
        assert parsed[row.key]["total"] == row.total
    lines = [json.loads(x) for x in files["items.jsonl"].read_text().splitlines()]
    assert len(lines) == sum(len(r.items) for r in results)
    assert all(x["reply_ref"].startswith("replies/") for x in lines)
    assert memsize_csv(aggregate(results)).splitlines()[0] == "memory,strategy,scheme,endpoint,size_bits,total"
    assert "| Total |" in files["summary.md"].read_text()
    assert len(load_results(tmp_path)) == len(results)
    reply_files = list((tmp_path / "replies").glob("*.jsonl"))
    assert len(reply_files) == len(results)


def test_missing_map_is_recorded_not_fatal(tmp_path):
    cfg = ExperimentConfig(cities=["Beijing", str(tmp_path / "nowhere.json")])
    results = run_matrix(cfg, tmp_path, {"oracle": ScriptedOracle()})
    assert results[0].error is None and results[1].error is not None
    assert len(aggregate(results)) == 1
