"""Synthetic map generators.

``random_map`` builds small valid maps directly on the grid (used by the
property tests). ``city_source`` lays out a vector source whose ingested map
hits a requested (POI, intersection, main road) count triple; the bundled
city fixtures were produced with it.
"""

from __future__ import annotations

import itertools
import random

from .ingest import VectorMapSource, VectorPoi, VectorRoad, check_catalog, ingest
from .mapenv import (
    MOORE,
    Coordinate,
    GridMap,
    Intersection,
    MapError,
    Poi,
    RoadSegment,
    nearest_navigable,
    validate_map,
)

PLACE_TYPES = (
    "Cafe", "Museum", "Bank", "Pharmacy", "Library", "Hotel", "School", "Bakery",
    "Cinema", "Post Office", "Market", "Clinic", "Bookstore", "Gallery", "Theater",
    "Gym", "Restaurant", "Temple", "Station", "Florist", "Bar", "Hospital",
    "Police Station", "Supermarket", "Tea House", "Noodle Bar", "Art School", "Bike Shop",
)


def place_names(n: int, rng: random.Random) -> list[str]:
    names = list(PLACE_TYPES)
    rng.shuffle(names)
    out = names[:n]
    k = 2
    while len(out) < n:
        out.extend(f"{t} {k}" for t in names[: n - len(out)])
        k += 1
    return out


def random_map(width: int, height: int, seed: int, n_pois: int | None = None,
               strokes: int | None = None) -> GridMap:
    """Small connected road network with POIs hanging off it."""
    rng = random.Random(seed)
    for _ in range(200):
        m = _try_random_map(width, height, rng, n_pois, strokes)
        if m is not None and validate_map(m).ok:
            return m
    raise MapError(f"could not build a random {width}x{height} map for seed {seed}")


def _try_random_map(width, height, rng, n_pois, strokes) -> GridMap | None:
    grid = [["."] * width for _ in range(height)]
    cover: dict[Coordinate, int] = {}
    segs = []
    start = Coordinate(rng.randrange(width), rng.randrange(height))
    road = [start]
    grid[start.row][start.col] = "r"
    cover[start] = 1
    n_strokes = strokes if strokes is not None else rng.randint(2, max(2, (width + height) // 3))
    for _ in range(n_strokes):
        origin = rng.choice(road)
        dc, dr = rng.choice(MOORE)
        length = rng.randint(2, max(2, max(width, height) - 2))
        cells = [origin]
        cur = origin
        for _ in range(length):
            nxt = Coordinate(cur.col + dc, cur.row + dr)
            if not (0 <= nxt.col < width and 0 <= nxt.row < height):
                break
            cells.append(nxt)
            cur = nxt
        if len(cells) < 2:
            continue
        for c in cells:
            if grid[c.row][c.col] == ".":
                grid[c.row][c.col] = "r"
                road.append(c)
            cover[c] = cover.get(c, 0) + 1
        segs.append(RoadSegment(tuple(cells), "main"))
    if not segs:
        return None
    inter_cells = sorted((c for c, k in cover.items() if k >= 2), key=lambda c: c.key)
    for c in inter_cells:
        grid[c.row][c.col] = "x"
    rows = ["".join(r) for r in grid]
    candidates = sorted(
        {
            Coordinate(c.col + dc, c.row + dr)
            for c in road
            for dc, dr in MOORE
            if 0 <= c.col + dc < width and 0 <= c.row + dr < height
            and grid[c.row + dr][c.col + dc] == "."
        },
        key=lambda c: c.key,
    )
    if len(candidates) < 2:
        return None
    k = n_pois if n_pois is not None else rng.randint(2, min(8, len(candidates)))
    k = min(k, len(candidates))
    chosen = rng.sample(candidates, k)
    for c in chosen:
        grid[c.row][c.col] = "p"
    rows = ["".join(r) for r in grid]
    names = place_names(k, rng)
    pois = tuple(
        Poi(i + 1, names[i], c, nearest_navigable(rows, c)) for i, c in enumerate(chosen)
    )
    inters = tuple(Intersection(i + 1, c) for i, c in enumerate(inter_cells))
    return GridMap(width, height, tuple(rows), pois, inters, tuple(segs), "synthetic")


# --------------------------------------------------------------------------
# catalog-shaped city layouts

_CELL = 50.0
_SIZE = 20


def _world(c: int, r: int) -> tuple[float, float]:
    return (_CELL * c + _CELL / 2, _CELL * (_SIZE - r) - _CELL / 2)


class _Layout:
    """Cell-level bookkeeping while composing a city source."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.road: dict[tuple[int, int], set[int]] = {}
        self.roads: list[tuple[list[tuple[int, int]], str]] = []
        self.junctions: list[tuple[int, int]] = []
        self.reserved: set[tuple[int, int]] = set()
        self.pois: list[tuple[int, int]] = []

    def add(self, cells, cls) -> None:
        k = len(self.roads)
        self.roads.append((cells, cls))
        for c in cells:
            self.road.setdefault(c, set()).add(k)

    def free(self, c) -> bool:
        return 0 <= c[0] < _SIZE and 0 <= c[1] < _SIZE and c not in self.road and c not in self.reserved

    def near_road(self, c, allowed) -> bool:
        for dc, dr in MOORE:
            n = (c[0] + dc, c[1] + dr)
            if n in self.road and n not in allowed:
                return True
        return False

    def junction_ok(self, j) -> bool:
        return all(max(abs(j[0] - o[0]), abs(j[1] - o[1])) >= 3 for o in self.junctions)

    def stroke_ok(self, body, joints) -> bool:
        """``body`` cells are new; ``joints`` are existing road cells it attaches to."""
        allowed = set(joints)
        for j in joints:
            for dc, dr in MOORE:
                allowed.add((j[0] + dc, j[1] + dr))
        for c in body:
            if not self.free(c):
                return False
            for dc, dr in MOORE:
                n = (c[0] + dc, c[1] + dr)
                if n in self.reserved:
                    return False
                if n in self.road and n not in allowed:
                    return False
        return all(self.junction_ok(j) for j in joints) and len(set(joints)) == len(joints)

    def poi_ok(self, p, link) -> bool:
        if not self.free(p):
            return False
        for dc, dr in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (p[0] + dc, p[1] + dr)
            if n != link and n in self.road:
                return False
        return all(max(abs(p[0] - q[0]), abs(p[1] - q[1])) >= 2 for q in self.pois)

    def reserve_poi(self, p, link) -> None:
        self.pois.append(p)
        self.reserved.add(p)
        for dc, dr in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (p[0] + dc, p[1] + dr)
            if n != link:
                self.reserved.add(n)


def _spaced(rng: random.Random, k: int, lo: int = 2, hi: int = 17, gap: int = 4) -> list[int] | None:
    for _ in range(200):
        pick = sorted(rng.sample(range(lo, hi + 1), k))
        if all(b - a >= gap for a, b in zip(pick, pick[1:])):
            return pick
    return None


def _compose(rng, h, v, mc, ms, ac, ab, dp) -> _Layout | None:
    lay = _Layout(rng)
    rows = _spaced(rng, h) if h else []
    cols = _spaced(rng, v) if v else []
    if rows is None or cols is None:
        return None
    hlines, vlines = [], []
    for r in rows:
        cells = [(c, r) for c in range(_SIZE)]
        lay.add(cells, "main")
        hlines.append(cells)
    for c in cols:
        cells = [(c, r) for r in range(_SIZE)]
        lay.add(cells, "main")
        vlines.append(cells)
    lay.junctions.extend((c, r) for r in rows for c in cols)

    def connector(cls) -> tuple | None:
        """Perpendicular road between two parallel full lines."""
        options = []
        if len(rows) >= 2:
            for a, b in zip(rows, rows[1:]):
                options += [("v", c, a, b) for c in range(_SIZE)]
        if len(cols) >= 2:
            for a, b in zip(cols, cols[1:]):
                options += [("h", r, a, b) for r in range(_SIZE)]
        rng.shuffle(options)
        for axis, fixed, a, b in options:
            if axis == "v":
                cells = [(fixed, r) for r in range(a, b + 1)]
            else:
                cells = [(c, fixed) for c in range(a, b + 1)]
            joints = [cells[0], cells[-1]]
            if lay.stroke_ok(cells[1:-1], joints):
                return cells, joints
        return None

    def spur(min_len=1, max_len=3) -> tuple | None:
        """Dead-end road leaving a full line perpendicularly."""
        options = []
        for r in rows:
            for c in range(_SIZE):
                for d in (-1, 1):
                    options.append(((c, r), (0, d)))
        for c in cols:
            for r in range(_SIZE):
                for d in (-1, 1):
                    options.append(((c, r), (d, 0)))
        rng.shuffle(options)
        for j, (dc, dr) in options:
            length = rng.randint(min_len, max_len)
            body = [(j[0] + dc * k, j[1] + dr * k) for k in range(1, length + 1)]
            end = body[-1]
            poi = (end[0] + dc, end[1] + dr)
            if lay.stroke_ok(body, [j]) and lay.free(poi) and not lay.near_road(poi, {end}) \
                    and poi not in {x for b in [body] for x in b}:
                return [j] + body, j, poi
        return None

    for _ in range(mc):
        got = connector("main")
        if got is None:
            return None
        cells, joints = got
        lay.add(cells, "main")
        lay.junctions.extend(joints)
    for _ in range(ms):
        got = spur(2, 4)
        if got is None:
            return None
        cells, j, _ = got
        lay.add(cells, "main")
        lay.junctions.append(j)
    for _ in range(ac):
        got = None
        for _ in range(60):
            cand = connector("auxiliary")
            if cand is None:
                break
            cells, joints = cand
            # POI sits across the host line from the connector's first joint
            j0, j1 = cells[0], cells[1]
            poi = (2 * j0[0] - j1[0], 2 * j0[1] - j1[1])
            if 0 <= poi[0] < _SIZE and 0 <= poi[1] < _SIZE and lay.poi_ok(poi, j0):
                got = (cells, joints, poi)
                break
        if got is None:
            return None
        cells, joints, poi = got
        lay.add(cells, "auxiliary")
        lay.junctions.extend(joints)
        lay.reserve_poi(poi, cells[0])
    for _ in range(ab):
        got = None
        for _ in range(60):
            cand = spur(1, 3)
            if cand is None:
                break
            cells, j, poi = cand
            if lay.poi_ok(poi, cells[-1]):
                got = cand
                break
        if got is None:
            return None
        cells, j, poi = got
        lay.add(cells, "auxiliary")
        lay.junctions.append(j)
        lay.reserve_poi(poi, cells[-1])
    # POIs directly beside a road cell that is not a junction
    spots = []
    for cell, owners in lay.road.items():
        if len(owners) != 1:
            continue
        for dc, dr in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            spots.append(((cell[0] + dc, cell[1] + dr), cell))
    spots.sort()
    rng.shuffle(spots)
    for _ in range(dp):
        for k, (p, link) in enumerate(spots):
            if lay.poi_ok(p, link) and all(
                max(abs(p[0] - j[0]), abs(p[1] - j[1])) >= 2 for j in lay.junctions
            ):
                lay.reserve_poi(p, link)
                break
        else:
            return None
    return lay


def _decompositions(pois: int, inters: int, mains: int):
    out = []
    for h, v in itertools.product(range(0, 5), range(0, 5)):
        if h + v == 0 or h * v > inters:
            continue
        for mc in range(0, mains - h - v + 1):
            ms = mains - h - v - mc
            rest = inters - h * v - 2 * mc - ms
            if rest < 0:
                continue
            for ac in range(0, rest // 2 + 1):
                ab = rest - 2 * ac
                dp = pois - ac - ab
                if dp < 0:
                    continue
                # prefer grids of full lines, few spurs, balanced POI placement
                score = (ms * 3 + abs(h - v) + abs(ab - dp) / 4 + ac / 2 - min(h, v) * 2)
                out.append((score, (h, v, mc, ms, ac, ab, dp)))
    out.sort()
    return [d for _, d in out]


def city_source(city: str, pois: int, inters: int, mains: int, seed: int = 0,
                max_tries: int = 400) -> VectorMapSource:
    """Vector source whose ingested 20x20 map has exactly the requested counts."""
    from .ingest import CatalogEntry

    entry = CatalogEntry(city, pois, inters, mains)
    rng = random.Random(f"{city}:{seed}")
    decomps = _decompositions(pois, inters, mains)
    if not decomps:
        raise MapError(f"no layout decomposition for {city}")
    for attempt in range(max_tries):
        params = decomps[min(attempt // 8, len(decomps) - 1)]
        lay = _compose(rng, *params)
        if lay is None:
            continue
        src = _to_source(city, lay, rng)
        try:
            m = ingest(src)
        except MapError:
            continue
        if validate_map(m).ok and check_catalog(m, entry).ok:
            return src
    raise MapError(f"could not lay out {city} in {max_tries} attempts")


def _to_source(city: str, lay: _Layout, rng: random.Random) -> VectorMapSource:
    roads = []
    for cells, cls in lay.roads:
        # straight strokes: endpoints suffice
        roads.append(VectorRoad((_world(*cells[0]), _world(*cells[-1])), cls))
    names = place_names(len(lay.pois), rng)
    order = sorted(lay.pois, key=lambda p: (p[1], p[0]))
    pois = tuple(VectorPoi(names[k], *_world(*p)) for k, p in enumerate(order))
    return VectorMapSource((0.0, 0.0, _CELL * _SIZE, _CELL * _SIZE), tuple(roads), pois, city)
