"""Symbolic grid maps: cell model, validation, local observation and routing.

Axis convention: ``col`` grows eastward, ``row`` grows southward, so row 0 is
the north edge. Every move (orthogonal or diagonal) costs 1.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Sequence


class MapError(ValueError):
    """Bad input to a map operation (out-of-bounds cell, unknown id, ...)."""


class RouteError(RuntimeError):
    """No navigable path exists between two POIs."""


class Coordinate(NamedTuple):
    col: int
    row: int

    @property
    def key(self) -> tuple[int, int]:
        """Row-major sort key."""
        return (self.row, self.col)


class CellKind(str, Enum):
    BACKGROUND = "."
    ROAD = "r"
    INTERSECTION = "x"
    POI = "p"

    @property
    def label(self) -> str:
        return _KIND_LABELS[self]


_KIND_LABELS = {
    CellKind.BACKGROUND: "background",
    CellKind.ROAD: "road",
    CellKind.INTERSECTION: "intersection",
    CellKind.POI: "poi",
}
NAVIGABLE = frozenset("rx")
MOORE = ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1))


@dataclass(frozen=True)
class Poi:
    id: int
    name: str
    at: Coordinate
    linked_road: Coordinate

    @property
    def label(self) -> str:
        return f"P{self.id}"


@dataclass(frozen=True)
class Intersection:
    id: int
    at: Coordinate

    @property
    def label(self) -> str:
        return f"I{self.id}"


@dataclass(frozen=True)
class RoadSegment:
    cells: tuple[Coordinate, ...]
    road_class: str = "main"


@dataclass(frozen=True)
class GridMap:
    """A rectangular symbolic map.

    ``cells`` holds one string per row; each character is a :class:`CellKind`
    code. Instances are treated as immutable; derived lookups (routes, BFS
    fields, node graph) are memoised on the instance.
    """

    width: int
    height: int
    cells: tuple[str, ...]
    pois: tuple[Poi, ...] = ()
    intersections: tuple[Intersection, ...] = ()
    segments: tuple[RoadSegment, ...] = ()
    city_name: str = ""
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def in_bounds(self, c: Coordinate) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def code(self, c: Coordinate) -> str:
        return self.cells[c[1]][c[0]]

    def kind(self, c: Coordinate) -> CellKind:
        return CellKind(self.code(c))

    def poi(self, poi_id: int) -> Poi:
        try:
            return self._poi_index()[poi_id]
        except KeyError:
            raise MapError(f"unknown poi id {poi_id}") from None

    def _poi_index(self) -> dict[int, Poi]:
        idx = self._cache.get("poi_index")
        if idx is None:
            idx = self._cache["poi_index"] = {p.id: p for p in self.pois}
        return idx

    def poi_at(self, c: Coordinate) -> Poi | None:
        idx = self._cache.get("poi_at")
        if idx is None:
            idx = self._cache["poi_at"] = {p.at: p for p in self.pois}
        return idx.get(c)

    def intersection_at(self, c: Coordinate) -> Intersection | None:
        idx = self._cache.get("inter_at")
        if idx is None:
            idx = self._cache["inter_at"] = {i.at: i for i in self.intersections}
        return idx.get(c)

    def node_label_at(self, c: Coordinate) -> str | None:
        p = self.poi_at(c)
        if p is not None:
            return p.label
        i = self.intersection_at(c)
        return i.label if i is not None else None

    @property
    def poi_ids(self) -> list[int]:
        return sorted(p.id for p in self.pois)

    def iter_cells(self) -> Iterator[tuple[Coordinate, str]]:
        for r, row in enumerate(self.cells):
            for c, ch in enumerate(row):
                yield Coordinate(c, r), ch

    def neighbors(self, c: Coordinate) -> Iterator[Coordinate]:
        for dc, dr in MOORE:
            n = Coordinate(c[0] + dc, c[1] + dr)
            if 0 <= n.col < self.width and 0 <= n.row < self.height:
                yield n

    def main_road_count(self) -> int:
        return sum(1 for s in self.segments if s.road_class == "main")


def chebyshev(a: Coordinate, b: Coordinate) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def euclidean_distance(a: Coordinate, b: Coordinate) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def nearest_navigable(cells: Sequence[str], at: Coordinate) -> Coordinate | None:
    """Nearest road/intersection cell to ``at`` (Euclidean, ties row-major)."""
    best = None
    best_key = None
    for r, row in enumerate(cells):
        for c, ch in enumerate(row):
            if ch in NAVIGABLE:
                key = ((c - at[0]) ** 2 + (r - at[1]) ** 2, r, c)
                if best_key is None or key < best_key:
                    best_key, best = key, Coordinate(c, r)
    return best


# --------------------------------------------------------------------------
# validation


class Violation(NamedTuple):
    rule: str
    element: str


@dataclass
class ValidationReport:
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}


def validate_map(m: GridMap, catalog_entry=None) -> ValidationReport:
    """Check every structural invariant of ``m``.

    ``catalog_entry`` (anything with ``poi_count``, ``intersection_count`` and
    ``main_road_count``) adds the catalog count checks.
    """
    out: list[Violation] = []
    add = lambda rule, el: out.append(Violation(rule, str(el)))  # noqa: E731

    if len(m.cells) != m.height or any(len(row) != m.width for row in m.cells):
        add("bad-dimensions", f"{m.width}x{m.height}")
        return ValidationReport(out)
    for c, ch in m.iter_cells():
        if ch not in ".rxp":
            add("bad-cell-code", f"{tuple(c)}={ch!r}")

    seen: set[int] = set()
    for p in m.pois:
        if p.id in seen:
            add("duplicate-poi-id", p.label)
        seen.add(p.id)
    seen = set()
    for i in m.intersections:
        if i.id in seen:
            add("duplicate-intersection-id", i.label)
        seen.add(i.id)

    poi_cells: set[Coordinate] = set()
    for p in m.pois:
        if not m.in_bounds(p.at):
            add("poi-out-of-bounds", p.label)
            continue
        if p.at in poi_cells:
            add("duplicate-poi-cell", p.label)
        poi_cells.add(p.at)
        if m.code(p.at) != "p":
            add("poi-cell-not-poi", p.label)
        if not m.in_bounds(p.linked_road):
            add("poi-link-out-of-bounds", p.label)
            continue
        if m.code(p.linked_road) not in NAVIGABLE:
            add("poi-link-not-road", p.label)
            continue
        if chebyshev(p.at, p.linked_road) != 1:
            add("poi-link-not-adjacent", p.label)
        if nearest_navigable(m.cells, p.at) != p.linked_road:
            add("poi-link-not-nearest", p.label)

    inter_cells = set()
    for i in m.intersections:
        if not m.in_bounds(i.at) or m.code(i.at) != "x":
            add("intersection-cell-not-intersection", i.label)
        inter_cells.add(i.at)
    for c, ch in m.iter_cells():
        if ch == "p" and c not in poi_cells:
            add("untracked-poi-cell", tuple(c))
        elif ch == "x" and c not in inter_cells:
            add("untracked-intersection-cell", tuple(c))

    links = {p.linked_road for p in m.pois}
    for k, s in enumerate(m.segments):
        if s.road_class not in ("main", "auxiliary"):
            add("segment-bad-class", k)
        if not s.cells:
            add("segment-empty", k)
            continue
        if any(not m.in_bounds(c) or m.code(c) not in NAVIGABLE for c in s.cells):
            add("segment-cell-not-road", k)
        if any(chebyshev(a, b) != 1 for a, b in zip(s.cells, s.cells[1:])):
            add("segment-not-adjacent", k)
        if s.road_class == "auxiliary" and s.cells[0] not in links and s.cells[-1] not in links:
            add("auxiliary-not-linked", k)

    if not out and m.pois:
        comp = _flood(m, m.pois[0].linked_road)
        if any(p.linked_road not in comp for p in m.pois):
            add("pois-not-mutually-reachable", m.city_name or "map")

    if catalog_entry is not None:
        if len(m.pois) != catalog_entry.poi_count:
            add("catalog-poi-count", f"{len(m.pois)}!={catalog_entry.poi_count}")
        if len(m.intersections) != catalog_entry.intersection_count:
            add("catalog-intersection-count",
                f"{len(m.intersections)}!={catalog_entry.intersection_count}")
        if m.main_road_count() != catalog_entry.main_road_count:
            add("catalog-main-road-count",
                f"{m.main_road_count()}!={catalog_entry.main_road_count}")
    return ValidationReport(out)


def _flood(m: GridMap, start: Coordinate) -> set[Coordinate]:
    seen = {start}
    todo = [start]
    while todo:
        c = todo.pop()
        for n in m.neighbors(c):
            if n not in seen and m.code(n) in NAVIGABLE:
                seen.add(n)
                todo.append(n)
    return seen


# --------------------------------------------------------------------------
# observation


class ObservationEntry(NamedTuple):
    dcol: int
    drow: int
    kind: CellKind
    id: int | None = None
    name: str | None = None


@dataclass(frozen=True)
class Observation:
    agent_at: Coordinate
    radius: int
    entries: tuple[ObservationEntry, ...]

    def visible_pois(self) -> list[int]:
        return [e.id for e in self.entries if e.kind is CellKind.POI]


def observe(m: GridMap, at: Coordinate, radius: int = 2) -> Observation:
    """Non-background cells within Chebyshev ``radius`` of ``at``, row-major."""
    at = Coordinate(*at)
    if not m.in_bounds(at):
        raise MapError(f"observation point {tuple(at)} out of bounds")
    if radius < 1:
        raise MapError("radius must be >= 1")
    key = ("obs", at, radius)
    hit = m._cache.get(key)
    if hit is not None:
        return hit
    entries = []
    for r in range(max(0, at.row - radius), min(m.height, at.row + radius + 1)):
        row = m.cells[r]
        for c in range(max(0, at.col - radius), min(m.width, at.col + radius + 1)):
            ch = row[c]
            if ch == ".":
                continue
            kind = CellKind(ch)
            ident = name = None
            if kind is CellKind.POI:
                p = m.poi_at(Coordinate(c, r))
                if p is not None:
                    ident, name = p.id, p.name
            elif kind is CellKind.INTERSECTION:
                i = m.intersection_at(Coordinate(c, r))
                if i is not None:
                    ident = i.id
            entries.append(ObservationEntry(c - at.col, r - at.row, kind, ident, name))
    obs = Observation(at, radius, tuple(entries))
    m._cache[key] = obs
    return obs


# --------------------------------------------------------------------------
# routing


@dataclass(frozen=True)
class Route:
    cells: tuple[Coordinate, ...]
    via_intersections: tuple[int, ...] = ()
    # index into ``cells`` of each entry of ``via_intersections``
    via_index: tuple[int, ...] = ()

    @property
    def length(self) -> int:
        return len(self.cells) - 1


def navigable_distances(m: GridMap, source: Coordinate) -> dict[Coordinate, int]:
    """BFS move counts from ``source`` over road/intersection cells."""
    key = ("bfs", source)
    hit = m._cache.get(key)
    if hit is not None:
        return hit
    dist = {source: 0}
    q = deque([source])
    while q:
        c = q.popleft()
        d = dist[c] + 1
        for n in m.neighbors(c):
            if n not in dist and m.code(n) in NAVIGABLE:
                dist[n] = d
                q.append(n)
    m._cache[key] = dist
    return dist


def route_length(m: GridMap, from_poi: int, to_poi: int) -> int:
    """Length of :func:`shortest_route` without materialising the cells."""
    if from_poi == to_poi:
        m.poi(from_poi)
        return 0
    a, b = m.poi(from_poi), m.poi(to_poi)
    d = navigable_distances(m, b.linked_road).get(a.linked_road)
    if d is None:
        raise RouteError(f"unreachable: {a.label} -> {b.label}")
    return d + 2


def shortest_route(m: GridMap, from_poi: int, to_poi: int) -> Route:
    """Fewest-move route between two POIs with lexicographic tie-breaking.

    Among equal-length routes the one whose cell sequence is smallest under
    row-major cell order wins; greedy descent on the BFS field from the
    destination yields exactly that sequence.
    """
    key = ("route", from_poi, to_poi)
    hit = m._cache.get(key)
    if hit is not None:
        return hit
    a, b = m.poi(from_poi), m.poi(to_poi)
    if from_poi == to_poi:
        route = Route((a.at,))
    else:
        dist = navigable_distances(m, b.linked_road)
        cur = a.linked_road
        if cur not in dist:
            raise RouteError(f"unreachable: {a.label} -> {b.label}")
        path = [a.at, cur]
        while cur != b.linked_road:
            want = dist[cur] - 1
            cur = min((n for n in m.neighbors(cur) if dist.get(n) == want), key=lambda n: n.key)
            path.append(cur)
        path.append(b.at)
        hits = [(k, m.intersection_at(c)) for k, c in enumerate(path) if 0 < k < len(path) - 1]
        hits = [(k, i) for k, i in hits if i is not None]
        route = Route(tuple(path), tuple(i.id for _, i in hits), tuple(k for k, _ in hits))
    m._cache[key] = route
    return route


def route_nodes(m: GridMap, route: Route) -> list[tuple[str, int]]:
    """(node label, index into route.cells) for every POI/intersection on a route."""
    out = []
    for k, c in enumerate(route.cells):
        label = m.node_label_at(c)
        if label is not None and (k in (0, len(route.cells) - 1) or label[0] == "I"):
            out.append((label, k))
    return out


def node_graph(m: GridMap) -> dict[str, dict[str, int]]:
    """Contracted road graph over POIs and intersections.

    Two nodes are adjacent when a path joins them whose interior cells are all
    plain road; the weight is the fewest moves over such a path. A POI is
    entered and left only through its linked road.
    """
    hit = m._cache.get("node_graph")
    if hit is not None:
        return hit
    pois_by_link: dict[Coordinate, list[Poi]] = {}
    for p in m.pois:
        pois_by_link.setdefault(p.linked_road, []).append(p)
    graph: dict[str, dict[str, int]] = {}
    starts = [(p.label, p.at, [p.linked_road]) for p in m.pois]
    starts += [
        (i.label, i.at, [n for n in m.neighbors(i.at) if m.code(n) in NAVIGABLE])
        for i in m.intersections
    ]
    for label, at, first in starts:
        adj: dict[str, int] = {}
        if label[0] == "I":
            for p in pois_by_link.get(at, ()):
                adj[p.label] = 1
        dist = {at: 0}
        q: deque[Coordinate] = deque()
        for c in first:
            dist[c] = 1
            q.append(c)
        while q:
            c = q.popleft()
            d = dist[c]
            if m.code(c) == "x":
                adj.setdefault(m.intersection_at(c).label, d)
                continue
            for p in pois_by_link.get(c, ()):
                if p.label != label:
                    adj.setdefault(p.label, d + 1)
            for n in m.neighbors(c):
                if n not in dist and m.code(n) in NAVIGABLE:
                    dist[n] = d + 1
                    q.append(n)
        adj.pop(label, None)
        graph[label] = adj
    m._cache["node_graph"] = graph
    return graph


# --------------------------------------------------------------------------
# map files


def map_to_dict(m: GridMap) -> dict:
    return {
        "city": m.city_name,
        "width": m.width,
        "height": m.height,
        "cells": list(m.cells),
        "pois": [
            {"id": p.id, "name": p.name, "col": p.at.col, "row": p.at.row,
             "link_col": p.linked_road.col, "link_row": p.linked_road.row}
            for p in m.pois
        ],
        "intersections": [{"id": i.id, "col": i.at.col, "row": i.at.row} for i in m.intersections],
        "segments": [
            {"class": s.road_class, "cells": [[c.col, c.row] for c in s.cells]}
            for s in m.segments
        ],
    }


def map_from_dict(doc: dict) -> GridMap:
    try:
        cells = tuple("".join(row) for row in doc["cells"])
        width = int(doc.get("width", len(cells[0]) if cells else 0))
        height = int(doc.get("height", len(cells)))
        pois = tuple(
            Poi(int(p["id"]), str(p["name"]), Coordinate(p["col"], p["row"]),
                Coordinate(p["link_col"], p["link_row"]))
            for p in doc.get("pois", [])
        )
        if "intersections" in doc:
            inters = tuple(
                Intersection(int(i["id"]), Coordinate(i["col"], i["row"]))
                for i in doc["intersections"]
            )
        else:
            # untagged files: number intersection cells in row-major order
            inters = tuple(
                Intersection(k + 1, c)
                for k, c in enumerate(c for c, ch in _iter_codes(cells) if ch == "x")
            )
        segs = tuple(
            RoadSegment(tuple(Coordinate(*c) for c in s["cells"]), s.get("class", "main"))
            for s in doc.get("segments", [])
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise MapError(f"malformed map document: {exc}") from exc
    return GridMap(width, height, cells, pois, inters, segs, str(doc.get("city", "")))


def _iter_codes(cells: Iterable[str]):
    for r, row in enumerate(cells):
        for c, ch in enumerate(row):
            yield Coordinate(c, r), ch


def _j(x) -> str:
    return json.dumps(x, ensure_ascii=False)


def dumps_map(m: GridMap) -> str:
    """Canonical JSON text: one row / POI / intersection / segment per line."""
    d = map_to_dict(m)

    def block(name: str, items: list) -> str:
        if not items:
            return f'  "{name}": []'
        body = ",\n".join("    " + _j(x) for x in items)
        return f'  "{name}": [\n{body}\n  ]'

    parts = [
        f'  "city": {_j(d["city"])}',
        f'  "width": {d["width"]}',
        f'  "height": {d["height"]}',
        block("cells", d["cells"]),
        block("pois", d["pois"]),
        block("intersections", d["intersections"]),
        block("segments", d["segments"]),
    ]
    return "{\n" + ",\n".join(parts) + "\n}\n"


def loads_map(text: str) -> GridMap:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapError(f"map file is not JSON: {exc}") from exc
    return map_from_dict(doc)


def load_map(path) -> GridMap:
    with open(path, encoding="utf-8") as fh:
        return loads_map(fh.read())


def save_map(m: GridMap, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_map(m))
