"""Vector road/POI layers to symbolic grid maps, plus the city catalog."""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Sequence

from .mapenv import (
    Coordinate,
    GridMap,
    Intersection,
    MapError,
    Poi,
    RoadSegment,
    chebyshev,
    nearest_navigable,
)

# keeps points on the max edge of the bounds inside the last row/column
_EDGE = Fraction(1, 1 << 20)


@dataclass(frozen=True)
class VectorRoad:
    points: tuple[tuple[float, float], ...]
    road_class: str = "main"


@dataclass(frozen=True)
class VectorPoi:
    name: str
    x: float
    y: float


@dataclass(frozen=True)
class VectorMapSource:
    bounds: tuple[float, float, float, float]
    roads: tuple[VectorRoad, ...]
    pois: tuple[VectorPoi, ...]
    city: str = ""

    def check(self) -> None:
        minx, miny, maxx, maxy = self.bounds
        if not (maxx > minx and maxy > miny):
            raise MapError("degenerate bounds")
        if not self.roads:
            raise MapError("source needs at least one road polyline")
        if not self.pois:
            raise MapError("source needs at least one POI")
        pts = [pt for r in self.roads for pt in r.points] + [(p.x, p.y) for p in self.pois]
        for x, y in pts:
            if not (minx <= x <= maxx and miny <= y <= maxy):
                raise MapError(f"point ({x}, {y}) outside bounds")
        for r in self.roads:
            if r.road_class not in ("main", "auxiliary"):
                raise MapError(f"bad road class {r.road_class!r}")
            if len(r.points) < 2:
                raise MapError("road polyline needs two points")


def vector_from_dict(doc: dict) -> VectorMapSource:
    try:
        return VectorMapSource(
            bounds=tuple(float(v) for v in doc["bounds"]),
            roads=tuple(
                VectorRoad(tuple((float(x), float(y)) for x, y in r["points"]), r.get("class", "main"))
                for r in doc["roads"]
            ),
            pois=tuple(VectorPoi(str(p["name"]), float(p["x"]), float(p["y"])) for p in doc["pois"]),
            city=str(doc.get("city", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MapError(f"malformed vector document: {exc}") from exc


def vector_to_dict(src: VectorMapSource) -> dict:
    doc: dict = {}
    if src.city:
        doc["city"] = src.city
    doc["bounds"] = list(src.bounds)
    doc["roads"] = [{"class": r.road_class, "points": [list(p) for p in r.points]} for r in src.roads]
    doc["pois"] = [{"name": p.name, "x": p.x, "y": p.y} for p in src.pois]
    return doc


def load_vector(path) -> VectorMapSource:
    with open(path, encoding="utf-8") as fh:
        return vector_from_dict(json.load(fh))


# --------------------------------------------------------------------------
# rasterization


def to_grid(src: VectorMapSource, x: float, y: float, width: int, height: int) -> tuple[Fraction, Fraction]:
    """World point to exact grid coordinates (north edge at grid y = 0)."""
    minx, miny, maxx, maxy = (Fraction(v) for v in src.bounds)
    gx = (Fraction(x) - minx) / (maxx - minx) * width
    gy = (maxy - Fraction(y)) / (maxy - miny) * height
    gx = min(max(gx, Fraction(0)), width - _EDGE)
    gy = min(max(gy, Fraction(0)), height - _EDGE)
    return gx, gy


def _floor_cell(x: Fraction, y: Fraction) -> Coordinate:
    return Coordinate(math.floor(x), math.floor(y))


def segment_cells(p0: tuple[Fraction, Fraction], p1: tuple[Fraction, Fraction]) -> list[Coordinate]:
    """Ordered cells a straight segment passes through (half-open cells).

    Splits the segment at every grid-line crossing; each crossing point and
    each open piece between crossings lies in exactly one cell.
    """
    (x0, y0), (x1, y1) = p0, p1
    dx, dy = x1 - x0, y1 - y0
    ts = {Fraction(0), Fraction(1)}
    for a, d in ((x0, dx), (y0, dy)):
        if d:
            lo, hi = sorted((a, a + d))
            for k in range(math.ceil(lo), math.floor(hi) + 1):
                t = (k - a) / d
                if 0 <= t <= 1:
                    ts.add(t)
    ts = sorted(ts)
    out: list[Coordinate] = []

    def push(t: Fraction) -> None:
        c = _floor_cell(x0 + dx * t, y0 + dy * t)
        if not out or out[-1] != c:
            out.append(c)

    for a, b in zip(ts, ts[1:]):
        push(a)
        push((a + b) / 2)
    push(ts[-1])
    return out


def polyline_cells(points: Sequence[tuple[Fraction, Fraction]]) -> list[Coordinate]:
    out: list[Coordinate] = []
    for a, b in zip(points, points[1:]):
        for c in segment_cells(a, b):
            if not out or out[-1] != c:
                out.append(c)
    return out


def rasterize(src: VectorMapSource, width: int = 20, height: int = 20) -> GridMap:
    """Burn roads and POIs into a grid; POIs are not linked yet.

    Intersections are derived from cells shared by two or more distinct
    polylines (crossings and T-junctions); each Moore-connected cluster of
    shared cells yields one intersection at its row-major-first cell.
    """
    src.check()
    if width < 5 or height < 5:
        raise MapError("grid must be at least 5x5")
    grid = [["."] * width for _ in range(height)]
    cover: dict[Coordinate, set[int]] = {}
    segments = []
    for k, road in enumerate(src.roads):
        pts = [to_grid(src, x, y, width, height) for x, y in road.points]
        cells = polyline_cells(pts)
        for c in cells:
            grid[c.row][c.col] = "r"
            cover.setdefault(c, set()).add(k)
        segments.append((cells, road.road_class))

    shared = {c for c, ks in cover.items() if len(ks) >= 2}
    reps = []
    seen: set[Coordinate] = set()
    for c in sorted(shared, key=lambda c: c.key):
        if c in seen:
            continue
        cluster = [c]
        seen.add(c)
        stack = [c]
        while stack:
            cur = stack.pop()
            for dc in (-1, 0, 1):
                for dr in (-1, 0, 1):
                    n = Coordinate(cur.col + dc, cur.row + dr)
                    if n in shared and n not in seen:
                        seen.add(n)
                        cluster.append(n)
                        stack.append(n)
        reps.append(min(cluster, key=lambda c: c.key))
    reps.sort(key=lambda c: c.key)
    for c in reps:
        grid[c.row][c.col] = "x"
    inters = tuple(Intersection(k + 1, c) for k, c in enumerate(reps))

    pois = []
    for k, vp in enumerate(src.pois):
        c = _floor_cell(*to_grid(src, vp.x, vp.y, width, height))
        if grid[c.row][c.col] != ".":
            c = _displace(grid, c)
        grid[c.row][c.col] = "p"
        pois.append(Poi(k + 1, vp.name, c, c))

    return GridMap(
        width,
        height,
        tuple("".join(row) for row in grid),
        tuple(pois),
        inters,
        tuple(RoadSegment(tuple(cells), cls) for cells, cls in segments),
        src.city,
    )


def _displace(grid: list[list[str]], c: Coordinate) -> Coordinate:
    h, w = len(grid), len(grid[0])
    free = [
        Coordinate(c.col + dc, c.row + dr)
        for dr in (-1, 0, 1)
        for dc in (-1, 0, 1)
        if (dc or dr)
        and 0 <= c.col + dc < w
        and 0 <= c.row + dr < h
        and grid[c.row + dr][c.col + dc] == "."
    ]
    if not free:
        raise MapError(f"poi-collision at {tuple(c)}")
    return min(free, key=lambda n: ((n.col - c.col) ** 2 + (n.row - c.row) ** 2, n.row, n.col))


# --------------------------------------------------------------------------
# linking


def normalize_and_link(m: GridMap) -> GridMap:
    """Link every POI to its nearest road cell, adding access roads as needed.

    A POI whose nearest road cell is not adjacent gets an auxiliary segment
    running from a new road cell beside it to that road cell. Links are then
    recomputed until stable, so the result satisfies the nearest-road rule.
    """
    cells = [list(row) for row in m.cells]
    segments = list(m.segments)
    pois = sorted(m.pois, key=lambda p: p.id)

    def snapshot() -> list[str]:
        return ["".join(r) for r in cells]

    for _ in range(len(pois) + 1):
        changed = False
        for p in pois:
            target = nearest_navigable(snapshot(), p.at)
            if target is None:
                raise MapError(f"unlinkable-poi {p.label}")
            if chebyshev(p.at, target) == 1:
                continue
            path = _access_path(cells, p.at, target)
            for c in path[:-1]:
                cells[c.row][c.col] = "r"
            segments.append(RoadSegment(tuple(path), "auxiliary"))
            changed = True
        if not changed:
            break

    final = snapshot()
    linked = tuple(Poi(p.id, p.name, p.at, nearest_navigable(final, p.at)) for p in pois)
    return GridMap(m.width, m.height, tuple(final), linked, m.intersections, tuple(segments), m.city_name)


def _access_path(cells: list[list[str]], start: Coordinate, goal: Coordinate) -> list[Coordinate]:
    """Cells from beside ``start`` to ``goal`` through background, row-major ties."""
    h, w = len(cells), len(cells[0])
    for passable in ("." , ".r"):
        dist = {goal: 0}
        q = deque([goal])
        while q:
            c = q.popleft()
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    n = Coordinate(c.col + dc, c.row + dr)
                    if n in dist or not (0 <= n.col < w and 0 <= n.row < h):
                        continue
                    if n == start or cells[n.row][n.col] in passable:
                        dist[n] = dist[c] + 1
                        q.append(n)
        if start in dist:
            break
    else:
        raise MapError(f"unlinkable-poi at {tuple(start)}")
    path = []
    cur = start
    while cur != goal:
        want = dist[cur] - 1
        cur = min(
            (Coordinate(cur.col + dc, cur.row + dr) for dr in (-1, 0, 1) for dc in (-1, 0, 1)
             if dist.get(Coordinate(cur.col + dc, cur.row + dr)) == want),
            key=lambda c: c.key,
        )
        path.append(cur)
    return path


def ingest(src: VectorMapSource, width: int = 20, height: int = 20) -> GridMap:
    return normalize_and_link(rasterize(src, width, height))


# --------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class CatalogEntry:
    city: str
    poi_count: int
    intersection_count: int
    main_road_count: int


@dataclass
class CatalogReport:
    city: str
    fields: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def mismatches(self) -> list[str]:
        return [k for k, (got, want) in self.fields.items() if got != want]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def load_catalog(path=None) -> dict[str, CatalogEntry]:
    if path is None:
        text = resources.files("mapmind.data").joinpath("catalog.csv").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rows = csv.DictReader(text.splitlines())
    out = {}
    for row in rows:
        e = CatalogEntry(row["city"], int(row["poi_count"]), int(row["intersection_count"]),
                         int(row["main_road_count"]))
        out[e.city] = e
    return out


def check_catalog(m: GridMap, entry: CatalogEntry) -> CatalogReport:
    """Compare map counts with a catalog row; auxiliary roads are not counted."""
    return CatalogReport(
        entry.city,
        {
            "poi_count": (len(m.pois), entry.poi_count),
            "intersection_count": (len(m.intersections), entry.intersection_count),
            "main_road_count": (m.main_road_count(), entry.main_road_count),
        },
    )
