"""Goal-driven exploration episodes and their event traces."""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from typing import Iterable

from .mapenv import (
    CellKind,
    Coordinate,
    GridMap,
    Observation,
    ObservationEntry,
    Route,
    euclidean_distance,
    observe,
    route_length,
    route_nodes,
    shortest_route,
)

STRATEGIES = ("NPS", "RVS", "TDS")
TRACE_VERSION = "trace v1"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EpisodeConfig:
    strategy: str = "NPS"
    n: int = 1
    radius: int = 2
    seed: int = 0
    tds_pairs: tuple[tuple[int, int], ...] | None = None
    # how NPS ranks equally-visited candidates: "route" or "euclidean"
    nps_metric: str = "route"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.radius < 1:
            raise ConfigError("radius must be >= 1")
        if self.nps_metric not in ("route", "euclidean"):
            raise ConfigError(f"unknown nps metric {self.nps_metric!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tds_pairs"] = [list(p) for p in self.tds_pairs] if self.tds_pairs is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeConfig":
        pairs = d.get("tds_pairs")
        return cls(
            strategy=d.get("strategy", "NPS"),
            n=int(d.get("n", 1)),
            radius=int(d.get("radius", 2)),
            seed=int(d.get("seed", 0)),
            tds_pairs=tuple(tuple(p) for p in pairs) if pairs is not None else None,
            nps_metric=d.get("nps_metric", "route"),
        )


@dataclass(frozen=True)
class Event:
    """One trace event.

    ``start``/``arrive``/``restart`` carry the node and the observation made
    there; ``traverse`` carries the route between two POIs.
    """

    step: int
    type: str
    node: str | None = None
    kind: str | None = None
    at: Coordinate | None = None
    observation: Observation | None = None
    from_poi: int | None = None
    to_poi: int | None = None
    route: Route | None = None

    @property
    def is_arrival(self) -> bool:
        return self.type in ("start", "arrive", "restart")


@dataclass
class ExplorationTrace:
    config: EpisodeConfig
    events: list[Event]
    visit_counts: dict[int, int]
    city: str = ""


# --------------------------------------------------------------------------
# target selection


def _eligible(ids: Iterable[int], visit_counts: dict[int, int], n: int, exclude=None) -> list[int]:
    return sorted(i for i in set(ids) if i != exclude and visit_counts.get(i, 0) < n)


def select_target_nps(m: GridMap, at: Coordinate, observation: Observation,
                      visit_counts: dict[int, int], n: int, rng=None,
                      metric: str = "route") -> int | None:
    """Least-visited eligible visible POI; ties by distance, then id."""
    here = m.poi_at(Coordinate(*at))
    cands = _eligible(observation.visible_pois(), visit_counts, n, here.id if here else None)
    if not cands:
        return None

    def dist(pid: int):
        if metric == "euclidean" or here is None:
            return euclidean_distance(at, m.poi(pid).at)
        return route_length(m, here.id, pid)

    return min(cands, key=lambda pid: (visit_counts.get(pid, 0), dist(pid), pid))


def select_target_rvs(observation: Observation, visit_counts: dict[int, int], n: int,
                      rng: random.Random, exclude: int | None = None) -> int | None:
    cands = _eligible(observation.visible_pois(), visit_counts, n, exclude)
    if not cands:
        return None
    return cands[rng.randrange(len(cands))]


def default_tds_pairs(m: GridMap, n: int, rng: random.Random) -> tuple[tuple[int, int], ...]:
    """Chain of fresh permutations of all POIs (one per required visit), paired."""
    seq: list[int] = []
    for _ in range(n):
        perm = m.poi_ids
        rng.shuffle(perm)
        if seq and len(perm) > 1 and perm[0] == seq[-1]:
            perm[0], perm[1] = perm[1], perm[0]
        seq.extend(perm)
    return tuple(zip(seq, seq[1:]))


def select_target_tds(pairs, progress: int, visit_counts: dict[int, int] | None = None,
                      n: int = 1) -> int | None:
    """Next destination of the pair sequence; None once done.

    Past the end of the sequence, any POI still short of ``n`` visits is
    returned (lowest id first) so custom sequences still terminate.
    """
    if progress < len(pairs):
        return pairs[progress][1]
    if visit_counts is None:
        return None
    left = _eligible(visit_counts, visit_counts, n)
    return left[0] if left else None


# --------------------------------------------------------------------------
# episodes


def run_episode(m: GridMap, config: EpisodeConfig) -> ExplorationTrace:
    ids = m.poi_ids
    if not ids:
        raise ConfigError("map has no POIs")
    rng = random.Random(config.seed)
    n = config.n
    counts = {i: 0 for i in ids}
    events: list[Event] = []

    pairs = None
    if config.strategy == "TDS":
        pairs = config.tds_pairs if config.tds_pairs is not None else default_tds_pairs(m, n, rng)
        known = set(ids)
        for a, b in pairs:
            if a not in known or b not in known:
                raise ConfigError(f"tds pair ({a}, {b}) references unknown poi")
        pairs = [p for p in pairs if p[0] != p[1]]
        start = pairs[0][0] if pairs else rng.choice(ids)
    else:
        start = rng.choice(ids)

    def arrival(kind: str, pid: int) -> None:
        p = m.poi(pid)
        counts[pid] += 1
        events.append(Event(len(events), kind, p.label, "poi", p.at, observe(m, p.at, config.radius)))

    def travel(src: int, dst: int) -> None:
        route = shortest_route(m, src, dst)
        events.append(Event(len(events), "traverse", from_poi=src, to_poi=dst, route=route))
        for label, k in route_nodes(m, route)[1:]:
            c = route.cells[k]
            kind = "poi" if label[0] == "P" else "intersection"
            events.append(Event(len(events), "arrive", label, kind, c, observe(m, c, config.radius)))
        counts[dst] += 1

    def done() -> bool:
        return min(counts.values()) >= n

    arrival("start", start)
    cur = start
    progress = 0
    while not done():
        obs = observe(m, m.poi(cur).at, config.radius)
        if config.strategy == "TDS":
            if progress < len(pairs):
                src, target = pairs[progress][0], select_target_tds(pairs, progress)
                progress += 1
                if src != cur:
                    travel(cur, src)
                    cur = src
                    if done():
                        break
                if target == cur:
                    continue
            else:
                # sequence exhausted: top up whatever is still short of n
                left = _eligible(ids, counts, n, exclude=cur)
                if not left:
                    arrival("restart", cur)
                    continue
                target = left[0]
        elif config.strategy == "NPS":
            target = select_target_nps(m, m.poi(cur).at, obs, counts, n, rng, config.nps_metric)
        else:
            target = select_target_rvs(obs, counts, n, rng, exclude=cur)
        if target is None:
            left = _eligible(ids, counts, n, exclude=cur) or _eligible(ids, counts, n)
            cur = left[0]
            arrival("restart", cur)
            continue
        travel(cur, target)
        cur = target
    return ExplorationTrace(config, events, counts, m.city_name)


def replay_visit_counts(trace: ExplorationTrace, poi_ids: Iterable[int] | None = None) -> dict[int, int]:
    """Visit counts re-derived from the events alone."""
    counts = {i: 0 for i in (poi_ids if poi_ids is not None else trace.visit_counts)}
    for ev in trace.events:
        if ev.is_arrival and ev.kind == "poi":
            pid = int(ev.node[1:])
            counts[pid] = counts.get(pid, 0) + 1
    return counts


# --------------------------------------------------------------------------
# trace files (JSON lines)


def _obs_to_json(obs: Observation) -> dict:
    return {
        "at": list(obs.agent_at),
        "radius": obs.radius,
        "entries": [[e.dcol, e.drow, e.kind.label, e.id, e.name] for e in obs.entries],
    }


_LABEL_TO_KIND = {k.label: k for k in CellKind}


def _obs_from_json(d: dict) -> Observation:
    return Observation(
        Coordinate(*d["at"]),
        int(d["radius"]),
        tuple(ObservationEntry(dc, dr, _LABEL_TO_KIND[k], i, nm) for dc, dr, k, i, nm in d["entries"]),
    )


def event_to_json(ev: Event) -> dict:
    d: dict = {"step": ev.step, "type": ev.type}
    if ev.type == "traverse":
        d["from"] = ev.from_poi
        d["to"] = ev.to_poi
        d["cells"] = [list(c) for c in ev.route.cells]
        d["via"] = list(ev.route.via_intersections)
        d["via_index"] = list(ev.route.via_index)
    else:
        d["node"] = ev.node
        d["kind"] = ev.kind
        d["at"] = list(ev.at)
        d["observation"] = _obs_to_json(ev.observation)
    return d


def event_from_json(d: dict) -> Event:
    if d["type"] == "traverse":
        route = Route(tuple(Coordinate(*c) for c in d["cells"]), tuple(d.get("via", ())),
                      tuple(d.get("via_index", ())))
        return Event(d["step"], "traverse", from_poi=d["from"], to_poi=d["to"], route=route)
    return Event(d["step"], d["type"], d["node"], d["kind"], Coordinate(*d["at"]),
                 _obs_from_json(d["observation"]))


def dumps_trace(trace: ExplorationTrace) -> str:
    header = {
        "format": TRACE_VERSION,
        "city": trace.city,
        "config": trace.config.to_dict(),
        "visit_counts": {str(k): v for k, v in sorted(trace.visit_counts.items())},
    }
    lines = [json.dumps(header, ensure_ascii=False, sort_keys=True)]
    lines += [json.dumps(event_to_json(e), ensure_ascii=False, sort_keys=True) for e in trace.events]
    return "\n".join(lines) + "\n"


def loads_trace(text: str) -> ExplorationTrace:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigError("empty trace file")
    header = json.loads(lines[0])
    if header.get("format") != TRACE_VERSION:
        raise ConfigError(f"unsupported trace format {header.get('format')!r}")
    events = [event_from_json(json.loads(ln)) for ln in lines[1:]]
    counts = {int(k): v for k, v in header["visit_counts"].items()}
    return ExplorationTrace(EpisodeConfig.from_dict(header["config"]), events, counts, header.get("city", ""))


def save_trace(trace: ExplorationTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_trace(trace))


def load_trace(path) -> ExplorationTrace:
    with open(path, encoding="utf-8") as fh:
        return loads_trace(fh.read())
