"""The ten acceptance criteria, each at its stated tolerance."""

from __future__ import annotations

import itertools
import time
from pathlib import Path
from statistics import mean


from mapmind.cities import city_names, city_vector
from mapmind.cli import cli_dispatch
from mapmind.explore import STRATEGIES, EpisodeConfig, run_episode
from mapmind.harness import ExperimentConfig, run_matrix
from mapmind.ingest import check_catalog, ingest, load_catalog
from mapmind.mapenv import route_length
from mapmind.memory import build_memory, fold
from mapmind.synth import random_map
from mapmind.tasks import ITEM_COUNTS, answer_from_map, generate_tasks, opposite

from oracles import gm_oracle, route_length_oracle, visited_cells

ORACLE = {"name": "oracle", "kind": "scripted-oracle"}
RANDOM = {"name": "random", "kind": "scripted-random", "seed": 1}
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_1_oracle_ceiling(verdict):
    t0 = time.perf_counter()
    results = []
    for phase in ("I", "II", "III"):
        results += run_matrix(ExperimentConfig.preset(phase, endpoints=[ORACLE]))
    elapsed = time.perf_counter() - t0
    scores = [r.total_accuracy for r in results]
    ok = all(r.error is None for r in results) and all(s == 1.0 for s in scores) and elapsed <= 300
    assert verdict(1, ok, f"{len(results)} city cells, min total {min(scores)}, {elapsed:.1f}s")


def test_2_random_floor(verdict):
    results = []
    for phase in ("I", "II"):
        results += run_matrix(ExperimentConfig.preset(phase, endpoints=[RANDOM]))
    n = sum(len(r.items) for r in results)
    acc = sum(it.correct for r in results for it in r.items) / n
    ok = n >= 2000 and abs(acc - 0.25) <= 0.025
    assert verdict(2, ok, f"DT accuracy {acc:.4f} over {n} items")


def test_3_pathfinding_oracle(verdict):
    maps, pairs, bad = 0, 0, 0
    sizes = [(6, 6), (7, 7), (8, 6), (8, 8), (9, 9), (10, 10), (10, 7)]
    for seed in range(30):
        for w, h in sizes:
            m = random_map(w, h, seed)
            maps += 1
            for a, b in itertools.combinations(m.poi_ids, 2):
                pairs += 1
                bad += route_length(m, a, b) != route_length_oracle(m, a, b)
    ok = maps >= 200 and bad == 0
    assert verdict(3, ok, f"{maps} maps, {pairs} POI pairs, {bad} mismatches")


def test_4_exploration_terminates(verdict, cities):
    episodes, failures = 0, 0
    for m in cities.values():
        for strategy in STRATEGIES:
            for n in (1, 2, 3):
                for seed in range(100):
                    trace = run_episode(m, EpisodeConfig(strategy, n, seed=seed))
                    episodes += 1
                    counts = [trace.visit_counts.get(p, 0) for p in m.poi_ids]
                    failures += min(counts) < n
    ok = episodes == 15 * 3 * 3 * 100 and failures == 0
    assert verdict(4, ok, f"{episodes} episodes, {failures} failures")


def test_5_task_soundness(verdict, cities):
    checked, wrong, pairs, opposed = 0, 0, 0, 0
    for m in cities.values():
        for seed in range(50):
            items = generate_tasks(m, seed)
            for it in items:
                if not it.degenerate:
                    checked += 1
                    wrong += answer_from_map(it, m) != it.correct
            links = {}
            for it in (i for i in items if i.category == "DJ"):
                links.setdefault(it.meta["pair_link"], []).append(it)
            for fwd, rev in links.values():
                pairs += 1
                opposed += (rev.meta["option_values"][rev.correct]
                            == opposite(fwd.meta["option_values"][fwd.correct]))
    ok = wrong == 0 and pairs == 15 * 50 * 4 and opposed == pairs
    assert verdict(5, ok, f"{checked} items, {wrong} mismatches; DJ pairs opposite {opposed}/{pairs}")


def test_6_item_counts(verdict, cities):
    total, off = 0, []
    for name, m in cities.items():
        items = generate_tasks(m, 0)
        counts = {c: sum(i.category == c for i in items) for c in ITEM_COUNTS}
        total += len(items)
        if counts != ITEM_COUNTS:
            off.append(name)
    ok = not off and total == 360
    assert verdict(6, ok, f"{total} items per run, cities off-count: {off or 'none'}")


def test_7_memory_ordering(verdict, cities):
    sizes = {k: [] for k in ("SDM", "NSM", "MM", "GM")}
    for m in cities.values():
        trace = run_episode(m, EpisodeConfig("NPS", 1, seed=0))
        for k in sizes:
            sizes[k].append(build_memory(trace, k).size_bits)
    avg = {k: mean(v) for k, v in sizes.items()}
    ratio = avg["SDM"] / avg["NSM"]
    ok = avg["SDM"] > avg["NSM"] > avg["MM"] > avg["GM"] and 1.5 <= ratio <= 2.5
    detail = ", ".join(f"{k} {v:.1f}" for k, v in avg.items())
    assert verdict(7, ok, f"mean bits {detail}; SDM/NSM {ratio:.2f}")


def test_8_memory_correctness(verdict):
    episodes, bad = 0, []
    for seed in range(50):
        w, h = (8, 8) if seed % 2 else (10, 9)
        m = random_map(w, h, 1000 + seed)
        strategy = STRATEGIES[seed % 3]
        trace = run_episode(m, EpisodeConfig(strategy, 1 + seed % 2, seed=seed))
        episodes += 1
        gm, mm = fold("GM", trace.events), fold("MM", trace.events)
        nodes, edges = gm_oracle(m, trace)
        if set(gm.nodes) != nodes or gm.edge_pairs() != edges:
            bad.append((seed, "GM"))
        if {tuple(c) for c in mm.cells()} != visited_cells(trace):
            bad.append((seed, "MM"))
    ok = episodes == 50 and not bad
    assert verdict(8, ok, f"{episodes} synthetic maps, failures: {bad or 'none'}")


def test_9_determinism(verdict, tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli_dispatch(["eval", "--config", str(CONFIGS / "phase3.toml"), "--out", str(out)]) == 0
        outs.append(out)
    same = {name: (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
            for name in ("cells.csv", "items.jsonl")}
    ok = all(same.values())
    assert verdict(9, ok, f"byte-identical: {same}")


def test_10_catalog_fidelity(verdict):
    catalog = load_catalog()
    failing, pois = [], []
    for name in city_names():
        m = ingest(city_vector(name))
        report = check_catalog(m, catalog[name])
        pois.append(len(m.pois))
        if not report.ok:
            failing.append(name)
    avg = round(mean(pois), 2)
    ok = not failing and len(pois) == 15 and avg == 15.27
    assert verdict(10, ok, f"{len(pois)} cities, failing: {failing or 'none'}, mean POI {avg}")
