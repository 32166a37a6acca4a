"""Multiple-choice spatial reasoning items with oracle-computed answers.

Five families per map: direction judgment (DJ), distance estimation (DS),
proximity judgment (PJ), POI density recognition (PDR) and path planning
(PP). Every item stores enough structure in ``meta`` for its answer to be
recomputed from the map (``answer_from_map``).
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import random
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .mapenv import Coordinate, GridMap, node_graph, route_length, shortest_route

CATEGORIES = ("DJ", "DS", "PJ", "PDR", "PP")
ITEM_COUNTS = {"DJ": 8, "DS": 4, "PJ": 4, "PDR": 4, "PP": 4}
LETTERS = "ABCD"
BEARINGS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
BEARING_NAMES = {"N": "North", "NE": "Northeast", "E": "East", "SE": "Southeast",
                 "S": "South", "SW": "Southwest", "W": "West", "NW": "Northwest"}
QUADRANTS = ("NW", "NE", "SW", "SE")
METRICS = ("euclidean", "road")

DS_MARGIN = 0.25
PJ_MARGIN = 0.5
MAX_RETRIES = 200


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class TaskItem:
    id: str
    category: str
    prompt: str
    options: tuple[str, ...]
    correct: int
    meta: dict = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return bool(self.meta.get("degenerate", False))

    @property
    def correct_letter(self) -> str:
        return LETTERS[self.correct]

    def render(self) -> str:
        """Question text followed by the lettered options."""
        opts = "\n".join(f"{LETTERS[k]}. {o}" for k, o in enumerate(self.options))
        return f"{self.prompt}\n{opts}"


# --------------------------------------------------------------------------
# directions


def opposite(d: str) -> str:
    return BEARINGS[(BEARINGS.index(d) + 4) % 8]


def oracle_direction(a: Coordinate, b: Coordinate) -> str:
    """Compass bearing of ``b`` seen from ``a`` in eight 45-degree sectors.

    Computed in integers: with north positive, the bearing is cardinal when
    the minor component is at most tan(22.5 deg) of the major one, i.e.
    (major + minor)^2 <= 2 * major^2, which also sends exact boundaries to
    the cardinal side.
    """
    dx = b[0] - a[0]
    dy = a[1] - b[1]
    if dx == 0 and dy == 0:
        raise TaskError("undefined-direction")
    ax, ay = abs(dx), abs(dy)
    major = max(ax, ay)
    if (ax + ay) ** 2 <= 2 * major * major:
        if ax >= ay:
            return "E" if dx > 0 else "W"
        return "N" if dy > 0 else "S"
    return ("N" if dy > 0 else "S") + ("E" if dx > 0 else "W")


def _adjacent(d: str) -> set[str]:
    k = BEARINGS.index(d)
    return {BEARINGS[(k + 1) % 8], BEARINGS[(k - 1) % 8]}


# --------------------------------------------------------------------------
# distances


def distance(m: GridMap, a: int, b: int, metric: str = "euclidean") -> float:
    if metric == "euclidean":
        pa, pb = m.poi(a).at, m.poi(b).at
        return math.hypot(pa[0] - pb[0], pa[1] - pb[1])
    if metric == "road":
        return float(route_length(m, a, b))
    raise TaskError(f"unknown metric {metric!r}")


def distance_scale(m: GridMap, metric: str = "euclidean") -> float:
    """Upper end of the DS range: grid diagonal, or longest POI route for road distance."""
    if metric == "euclidean":
        return math.hypot(m.width - 1, m.height - 1)
    ids = m.poi_ids
    return float(max((route_length(m, a, b) for a, b in itertools.combinations(ids, 2)), default=1))


def distance_intervals(scale: float) -> list[tuple[float, float]]:
    q = scale / 4
    return [(k * q, (k + 1) * q) for k in range(4)]


def interval_index(d: float, intervals: Sequence[tuple[float, float]]) -> int:
    for k, (lo, hi) in enumerate(intervals):
        if lo <= d < hi:
            return k
    return len(intervals) - 1


def _near_boundary(d: float, intervals, margin: float) -> bool:
    return any(abs(d - lo) < margin for lo, _ in intervals[1:])


# --------------------------------------------------------------------------
# density


def quadrant_of(m: GridMap, at: Coordinate) -> str:
    north = at[1] < m.height // 2
    west = at[0] < m.width // 2
    return ("N" if north else "S") + ("W" if west else "E")


def quadrant_counts(m: GridMap) -> dict[str, int]:
    counts = {q: 0 for q in QUADRANTS}
    for p in m.pois:
        counts[quadrant_of(m, p.at)] += 1
    return counts


def _quadrant_text(m: GridMap, q: str) -> str:
    hc, hr = m.width // 2, m.height // 2
    cols = f"{0}-{hc - 1}" if q[1] == "W" else f"{hc}-{m.width - 1}"
    rows = f"{0}-{hr - 1}" if q[0] == "N" else f"{hr}-{m.height - 1}"
    name = {"NW": "Northwest", "NE": "Northeast", "SW": "Southwest", "SE": "Southeast"}[q]
    return f"{name} region (columns {cols}, rows {rows})"


# --------------------------------------------------------------------------
# paths


def _sequence_length(graph: dict[str, dict[str, int]], seq: Sequence[str]) -> int | None:
    total = 0
    for a, b in zip(seq, seq[1:]):
        w = graph.get(a, {}).get(b)
        if w is None:
            return None
        total += w
    return total


def valid_route_sequence(m: GridMap, seq: Sequence[str]) -> bool:
    """Endpoints are POIs, interior nodes are intersections, hops are road edges."""
    if len(seq) < 2 or seq[0][0] != "P" or seq[-1][0] != "P":
        return False
    if any(s[0] != "I" for s in seq[1:-1]) or len(set(seq)) != len(seq):
        return False
    return _sequence_length(node_graph(m), seq) is not None


def sequence_length(m: GridMap, seq: Sequence[str]) -> int | None:
    return _sequence_length(node_graph(m), seq)


def _lkey(label: str) -> tuple[int, int]:
    return (0 if label[0] == "P" else 1, int(label[1:]))


def constrained_route(graph, src: str, dst: str, forbidden: set[frozenset]) -> tuple[int, tuple[str, ...]] | None:
    """Shortest node path avoiding ``forbidden`` edges; POIs never interior.

    Ties go to the lexicographically smallest label sequence.
    """
    heap = [(0, (_lkey(src),), (src,))]
    settled = set()
    while heap:
        d, _, path = heapq.heappop(heap)
        node = path[-1]
        if node == dst:
            return d, path
        if node in settled:
            continue
        settled.add(node)
        if node[0] == "P" and node != src:
            continue
        for nxt, w in graph.get(node, {}).items():
            if nxt in settled or frozenset((node, nxt)) in forbidden:
                continue
            if nxt[0] == "P" and nxt != dst:
                continue
            p = path + (nxt,)
            heapq.heappush(heap, (d + w, tuple(map(_lkey, p)), p))
    return None


def route_alternatives(m: GridMap, a: int, b: int, want: int = 3,
                       budget: int = 40) -> tuple[tuple[str, ...], int, list[tuple[int, tuple[str, ...]]]]:
    """(shortest sequence, its length, strictly longer alternatives).

    Alternatives come from re-searching with shortest-route edges forbidden:
    single edges first, then growing sets. Diagonal moves let roads skirt
    intersection cells, so a search often finds another route of the same
    length; its edges are then forbidden too until longer routes appear.
    """
    graph = node_graph(m)
    route = shortest_route(m, a, b)
    best = (f"P{a}",) + tuple(f"I{i}" for i in route.via_intersections) + (f"P{b}",)
    length = route.length
    found: dict[tuple[str, ...], int] = {}
    queue = deque((frozenset((e,)), best) for e in map(frozenset, zip(best, best[1:])))
    tried: set[frozenset] = set()
    while queue and budget > 0 and len(found) < want:
        forbidden, _ = queue.popleft()
        if forbidden in tried:
            continue
        tried.add(forbidden)
        budget -= 1
        hit = constrained_route(graph, best[0], best[-1], set(forbidden))
        if hit is None:
            continue
        d, path = hit
        if d > length:
            found.setdefault(path, d)
        # extend the forbidden set along the route just found
        for e in map(frozenset, zip(path, path[1:])):
            queue.append((forbidden | {e}, path))
    if len(found) < want:
        for d, path in _detours(graph, best[0], best[-1], length):
            found.setdefault(path, d)
            if len(found) >= want:
                break
    alts = sorted(((d, s) for s, d in found.items()), key=lambda t: (t[0], [_lkey(x) for x in t[1]]))
    return best, length, alts


def _detours(graph, src: str, dst: str, length: int):
    """Routes forced through one intersection that no shortest route uses."""
    out = []
    for v in sorted((n for n in graph if n[0] == "I"), key=_lkey):
        first = constrained_route(graph, src, v, set())
        second = constrained_route(graph, v, dst, set())
        if first is None or second is None:
            continue
        path = first[1] + second[1][1:]
        d = first[0] + second[0]
        if d > length and len(set(path)) == len(path):
            out.append((d, path))
    out.sort(key=lambda t: (t[0], [_lkey(x) for x in t[1]]))
    return out


def _render_route(seq: Sequence[str]) -> str:
    return " -> ".join(seq)


# --------------------------------------------------------------------------
# generators


def _poi_text(m: GridMap, pid: int) -> str:
    p = m.poi(pid)
    return f"{p.name} (P{pid})"


def _rng(m: GridMap, category: str, seed: int) -> random.Random:
    return random.Random(f"{category}:{m.city_name}:{seed}")


def _slug(m: GridMap) -> str:
    return (m.city_name or "map").lower().replace(" ", "_")


def _item(m, category, k, prompt, values, correct_value, render, rng, meta, order=None) -> TaskItem:
    if order is None:
        order = list(values)
        rng.shuffle(order)
    options = tuple(render(v) for v in order)
    if len(set(options)) != 4:
        raise TaskError(f"{category} options not distinct: {options}")
    meta = dict(meta)
    meta["option_values"] = [list(v) if isinstance(v, tuple) else v for v in order]
    meta.setdefault("degenerate", False)
    return TaskItem(f"{_slug(m)}-{category}-{k}", category, prompt, options, order.index(correct_value), meta)


def gen_direction_items(m: GridMap, seed: int) -> list[TaskItem]:
    ids = m.poi_ids
    if len(ids) < 2:
        raise TaskError("direction items need at least two POIs")
    rng = _rng(m, "DJ", seed)
    pairs = list(itertools.combinations(ids, 2))
    rng.shuffle(pairs)
    chosen = [pairs[k % len(pairs)] for k in range(4)]
    items = []
    for link, (a, b) in enumerate(chosen):
        if rng.random() < 0.5:
            a, b = b, a
        fwd = oracle_direction(m.poi(a).at, m.poi(b).at)
        pool = [d for d in BEARINGS if d != fwd and d not in _adjacent(fwd)]
        order = rng.sample(pool, 3) + [fwd]
        rng.shuffle(order)
        for rev, (x, y, correct, opts) in enumerate((
            (a, b, fwd, order),
            (b, a, opposite(fwd), [opposite(d) for d in order]),
        )):
            prompt = (f"In which direction is {_poi_text(m, y)} relative to {_poi_text(m, x)}?")
            meta = {"pois": [x, y], "pair_link": link, "reverse": bool(rev)}
            items.append(_item(m, "DJ", 2 * link + rev, prompt, opts, correct,
                               lambda d: BEARING_NAMES[d], rng, meta, order=opts))
    return items


def gen_distance_items(m: GridMap, seed: int, metric: str = "euclidean",
                       margin: float = DS_MARGIN) -> list[TaskItem]:
    ids = m.poi_ids
    if len(ids) < 2:
        raise TaskError("distance items need at least two POIs")
    rng = _rng(m, "DS", seed)
    scale = distance_scale(m, metric)
    intervals = distance_intervals(scale)
    pairs = list(itertools.combinations(ids, 2))
    unit = "cells" if metric == "euclidean" else "moves"
    items = []
    used: set = set()
    for k, band in enumerate(("short", "short", "long", "long")):
        allowed = (0, 1) if band == "short" else (2, 3)
        pick, degenerate = None, True
        for _ in range(MAX_RETRIES):
            a, b = pairs[rng.randrange(len(pairs))]
            d = distance(m, a, b, metric)
            if (a, b) in used or interval_index(d, intervals) not in allowed:
                continue
            if _near_boundary(d, intervals, margin):
                continue
            pick, degenerate = (a, b), False
            break
        if pick is None:
            # fall back to the pair closest to the band's middle, flagged
            mid = scale / 4 if band == "short" else 3 * scale / 4
            pick = min((p for p in pairs if p not in used) or pairs,
                       key=lambda p: (abs(distance(m, *p, metric) - mid), p))
        used.add(pick)
        a, b = pick
        d = distance(m, a, b, metric)
        correct = interval_index(d, intervals)
        kind = "straight-line" if metric == "euclidean" else "road"
        prompt = (f"The {kind} distance between {_poi_text(m, a)} and {_poi_text(m, b)} "
                  f"is closest to which interval (in grid {unit})?")
        meta = {"pois": [a, b], "band": band, "metric": metric, "scale": scale,
                "intervals": [list(iv) for iv in intervals], "degenerate": degenerate}
        items.append(_item(m, "DS", k, prompt, [0, 1, 2, 3], correct,
                           lambda i: f"{intervals[i][0]:.2f} to {intervals[i][1]:.2f}", rng, meta,
                           order=[0, 1, 2, 3]))
    return items


def gen_proximity_items(m: GridMap, seed: int, metric: str = "euclidean",
                        margin: float = PJ_MARGIN) -> list[TaskItem]:
    ids = m.poi_ids
    if len(ids) < 5:
        raise TaskError("proximity items need at least five POIs")
    rng = _rng(m, "PJ", seed)
    items = []
    for k in range(4):
        ref, alts, degenerate = None, None, True
        for _ in range(MAX_RETRIES):
            group = rng.sample(ids, 5)
            ref, alts = group[0], group[1:]
            ds = sorted(distance(m, ref, x, metric) for x in alts)
            if ds[1] - ds[0] >= margin:
                degenerate = False
                break
        dists = {x: distance(m, ref, x, metric) for x in alts}
        correct = min(alts, key=lambda x: (dists[x], x))
        prompt = f"Which of the following POIs is closest to {_poi_text(m, ref)}?"
        meta = {"pois": [ref] + alts, "reference": ref, "metric": metric, "degenerate": degenerate}
        items.append(_item(m, "PJ", k, prompt, alts, correct, lambda x: _poi_text(m, x), rng, meta))
    return items


def gen_density_items(m: GridMap, seed: int) -> list[TaskItem]:
    rng = _rng(m, "PDR", seed)
    counts = quadrant_counts(m)
    items = []
    for k, which in enumerate(("highest", "highest", "lowest", "lowest")):
        ext = max(counts.values()) if which == "highest" else min(counts.values())
        tied = [q for q in QUADRANTS if counts[q] == ext]
        # first item of each kind keeps the fixed order, the second is shuffled
        order = list(QUADRANTS)
        if k % 2:
            rng.shuffle(order)
        prompt = f"Which region of the map contains the {which} number of POIs?"
        meta = {"extreme": which, "counts": counts, "degenerate": len(tied) != 1}
        items.append(_item(m, "PDR", k, prompt, order, tied[0], lambda q: _quadrant_text(m, q), rng,
                           meta, order=order))
    return items


def gen_path_items(m: GridMap, seed: int) -> list[TaskItem]:
    ids = m.poi_ids
    if len(ids) < 2:
        raise TaskError("path items need at least two POIs")
    rng = _rng(m, "PP", seed)
    pairs = sorted(itertools.combinations(ids, 2), key=lambda p: (route_length(m, *p), p))
    third = max(1, len(pairs) // 3)
    tiers = {"short": pairs[:third], "long": pairs[-third:]}
    items = []
    used: set = set()
    for k, band in enumerate(("long", "long", "short", "short")):
        pool = [p for p in tiers[band] if p not in used] or tiers[band]
        rng.shuffle(pool)
        chosen = None
        for a, b in pool[:MAX_RETRIES]:
            if rng.random() < 0.5:
                a, b = b, a
            best, length, alts = route_alternatives(m, a, b)
            if len(alts) >= 3:
                chosen = (a, b, best, length, alts, False)
                break
            if chosen is None:
                chosen = (a, b, best, length, alts, True)
        a, b, best, length, alts, degenerate = chosen
        used.add((min(a, b), max(a, b)))
        picks = [s for _, s in alts[:3]]
        # pad degenerate items with placeholder detours so four options remain
        while len(picks) < 3:
            picks.append(best[:1] + ("(no alternative)",) * (len(picks) + 1) + best[-1:])
        cand = [best] + picks
        lengths = [length] + [d for d, _ in alts[:3]]
        prompt = f"Which is the shortest road route from {_poi_text(m, a)} to {_poi_text(m, b)}?"
        meta = {"pois": [a, b], "band": band, "lengths": lengths, "degenerate": degenerate}
        items.append(_item(m, "PP", k, prompt, cand, best, _render_route, rng, meta))
    return items


def generate_tasks(m: GridMap, seed: int = 0, metric: str = "euclidean",
                   ds_margin: float = DS_MARGIN, pj_margin: float = PJ_MARGIN) -> list[TaskItem]:
    """All 24 items for one map in DJ, DS, PJ, PDR, PP order."""
    if metric not in METRICS:
        raise TaskError(f"unknown metric {metric!r}")
    return (gen_direction_items(m, seed)
            + gen_distance_items(m, seed, metric, ds_margin)
            + gen_proximity_items(m, seed, metric, pj_margin)
            + gen_density_items(m, seed)
            + gen_path_items(m, seed))


# --------------------------------------------------------------------------
# oracle answers


def _value(v):
    return tuple(v) if isinstance(v, list) else v


def answer_from_map(item: TaskItem, m: GridMap) -> int | None:
    """Recompute the correct option index from the map; None if no option matches."""
    meta = item.meta
    values = [_value(v) for v in meta["option_values"]]
    cat = item.category
    if cat == "DJ":
        a, b = meta["pois"]
        want = oracle_direction(m.poi(a).at, m.poi(b).at)
    elif cat == "DS":
        metric = meta.get("metric", "euclidean")
        intervals = distance_intervals(distance_scale(m, metric))
        want = interval_index(distance(m, *meta["pois"], metric), intervals)
    elif cat == "PJ":
        ref = meta["reference"]
        metric = meta.get("metric", "euclidean")
        want = min(values, key=lambda x: (distance(m, ref, x, metric), x))
    elif cat == "PDR":
        counts = quadrant_counts(m)
        pick = max if meta["extreme"] == "highest" else min
        want = pick(values, key=lambda q: counts[q])
    elif cat == "PP":
        graph = node_graph(m)
        scored = [(_sequence_length(graph, s), s) for s in values]
        scored = [(d, s) for d, s in scored if d is not None]
        if not scored:
            return None
        want = min(scored)[1]
    else:
        raise TaskError(f"unknown category {cat!r}")
    return values.index(want) if want in values else None


# --------------------------------------------------------------------------
# task files


def item_to_dict(item: TaskItem) -> dict:
    d = asdict(item)
    d["options"] = list(item.options)
    return d


def item_from_dict(d: dict) -> TaskItem:
    if len(d["options"]) != 4:
        raise TaskError(f"item {d.get('id')} must have four options")
    return TaskItem(d["id"], d["category"], d["prompt"], tuple(d["options"]), int(d["correct"]),
                    dict(d.get("meta", {})))


def dumps_tasks(items: Sequence[TaskItem]) -> str:
    return json.dumps([item_to_dict(i) for i in items], ensure_ascii=False, indent=1, sort_keys=True) + "\n"


def loads_tasks(text: str) -> list[TaskItem]:
    return [item_from_dict(d) for d in json.loads(text)]


def save_tasks(items: Sequence[TaskItem], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_tasks(items))


def load_tasks(path) -> list[TaskItem]:
    with open(path, encoding="utf-8") as fh:
        return loads_tasks(fh.read())
