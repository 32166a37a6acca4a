from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapmind.explore import (
    ConfigError,
    EpisodeConfig,
    default_tds_pairs,
    dumps_trace,
    loads_trace,
    replay_visit_counts,
    run_episode,
)
from mapmind.mapenv import observe, route_length, shortest_route
from mapmind.synth import random_map


def _selections(trace):
    """(counts before, origin poi, target poi) for each traversal."""
    counts = {i: 0 for i in trace.visit_counts}
    out = []
    for ev in trace.events:
        if ev.type == "traverse":
            out.append((dict(counts), ev.from_poi, ev.to_poi))
        elif ev.is_arrival and ev.kind == "poi":
            counts[int(ev.node[1:])] += 1
    return out


@pytest.mark.parametrize("strategy", ["NPS", "RVS", "TDS"])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_episode_terminates_with_visit_counts(beijing, strategy, n):
    trace = run_episode(beijing, EpisodeConfig(strategy, n, seed=3))
    assert min(trace.visit_counts.values()) >= n
    assert replay_visit_counts(trace) == trace.visit_counts
    assert trace.events[0].type == "start"


def test_nps_picks_least_visited_then_nearest(beijing):
    trace = run_episode(beijing, EpisodeConfig("NPS", 2, seed=5))
    for counts, src, dst in _selections(trace):
        obs = observe(beijing, beijing.poi(src).at, 2)
        cands = [p for p in obs.visible_pois() if p != src and counts[p] < 2]
        best = min(cands, key=lambda p: (counts[p], route_length(beijing, src, p), p))
        assert dst == best


def test_rvs_picks_visible_eligible(beijing):
    trace = run_episode(beijing, EpisodeConfig("RVS", 1, seed=9))
    for counts, src, dst in _selections(trace):
        assert dst in observe(beijing, beijing.poi(src).at, 2).visible_pois()
        assert counts[dst] < 1


def test_restart_when_nothing_eligible_in_view(beijing):
    trace = run_episode(beijing, EpisodeConfig("NPS", 1, seed=0))
    restarts = [ev for ev in trace.events if ev.type == "restart"]
    assert restarts
    for k, ev in enumerate(trace.events):
        if ev.type == "restart":
            prev = next(e for e in reversed(trace.events[:k]) if e.is_arrival and e.kind == "poi")
            counts = replay_visit_counts(type(trace)(trace.config, trace.events[:k], trace.visit_counts))
            vis = observe(beijing, prev.at, 2).visible_pois()
            assert all(counts[p] >= 1 for p in vis if f"P{p}" != prev.node)


def test_tds_follows_pairs(beijing):
    pairs = ((1, 2), (2, 3), (5, 6))
    trace = run_episode(beijing, EpisodeConfig("TDS", 1, seed=0, tds_pairs=pairs))
    hops = [(ev.from_poi, ev.to_poi) for ev in trace.events if ev.type == "traverse"]
    assert hops[:4] == [(1, 2), (2, 3), (3, 5), (5, 6)]
    assert trace.events[0].node == "P1"


def test_default_tds_pairs_cover_every_poi(beijing):
    import random

    pairs = default_tds_pairs(beijing, 2, random.Random(0))
    seq = [pairs[0][0]] + [b for _, b in pairs]
    assert sorted(seq) == sorted(beijing.poi_ids * 2)
    assert all(a != b for a, b in pairs)


def test_traversal_arrivals_include_intersections(beijing):
    trace = run_episode(beijing, EpisodeConfig("NPS", 1, seed=1))
    for k, ev in enumerate(trace.events):
        if ev.type == "traverse":
            route = shortest_route(beijing, ev.from_poi, ev.to_poi)
            expect = [f"I{i}" for i in route.via_intersections] + [f"P{ev.to_poi}"]
            got = [e.node for e in trace.events[k + 1:k + 1 + len(expect)]]
            assert got == expect


def test_trace_round_trip_is_byte_stable(beijing):
    trace = run_episode(beijing, EpisodeConfig("RVS", 2, seed=4))
    text = dumps_trace(trace)
    again = loads_trace(text)
    assert dumps_trace(again) == text
    assert again.visit_counts == trace.visit_counts


def test_determinism(beijing):
    a = run_episode(beijing, EpisodeConfig("RVS", 1, seed=11))
    b = run_episode(beijing, EpisodeConfig("RVS", 1, seed=11))
    assert dumps_trace(a) == dumps_trace(b)


@pytest.mark.parametrize("kw", [{"strategy": "XYZ"}, {"n": 0}, {"radius": 0}, {"nps_metric": "manhattan"}])
def test_bad_config(kw):
    with pytest.raises(ConfigError):
        EpisodeConfig(**kw)


def test_tds_unknown_poi(beijing):
    with pytest.raises(ConfigError):
        run_episode(beijing, EpisodeConfig("TDS", tds_pairs=((1, 99),)))


def test_bad_trace_header():
    with pytest.raises(ConfigError):
        loads_trace('{"format": "other"}\n')


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 5000), strategy=st.sampled_from(["NPS", "RVS", "TDS"]), n=st.integers(1, 3))
def test_random_maps_always_terminate(seed, strategy, n):
    m = random_map(8, 8, seed)
    trace = run_episode(m, EpisodeConfig(strategy, n, seed=seed))
    assert min(replay_visit_counts(trace).values()) >= n
