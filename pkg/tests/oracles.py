"""Independent reference computations used to cross-check the package."""

from __future__ import annotations

import math
from fractions import Fraction

import networkx as nx

MOVES = [(dc, dr) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dc or dr]


def cell_graph(m) -> nx.Graph:
    """Navigable cells with 8-neighbour unit edges."""
    g = nx.Graph()
    for r, row in enumerate(m.cells):
        for c, ch in enumerate(row):
            if ch in "rx":
                g.add_node((c, r))
                for dc, dr in MOVES:
                    n = (c + dc, r + dr)
                    if 0 <= n[0] < m.width and 0 <= n[1] < m.height and m.cells[n[1]][n[0]] in "rx":
                        g.add_edge((c, r), n)
    return g


def route_length_oracle(m, a, b) -> int:
    """Moves between two POIs: step onto the link, walk roads, step off."""
    if a == b:
        return 0
    pa, pb = m.poi(a), m.poi(b)
    g = cell_graph(m)
    return nx.shortest_path_length(g, tuple(pa.linked_road), tuple(pb.linked_road)) + 2


def lexmin_route_oracle(m, a, b) -> list[tuple[int, int]]:
    """Smallest (row-major) cell sequence among all shortest routes."""
    pa, pb = m.poi(a), m.poi(b)
    g = cell_graph(m)
    paths = nx.all_shortest_paths(g, tuple(pa.linked_road), tuple(pb.linked_road))
    key = lambda p: [(c[1], c[0]) for c in p]  # noqa: E731
    best = min(paths, key=key)
    return [tuple(pa.at)] + list(best) + [tuple(pb.at)]


def node_graph_oracle(m) -> dict[str, dict[str, int]]:
    """Contracted graph by brute force over terminal pairs.

    For each pair (u, v) of POI/intersection nodes, search a graph holding
    only plain road cells plus u and v. A POI touches nothing but its link
    cell; an intersection touches its 8 neighbours.
    """
    roads = {(c, r) for r, row in enumerate(m.cells) for c, ch in enumerate(row) if ch == "r"}
    terms = {p.label: ("P", tuple(p.at), tuple(p.linked_road)) for p in m.pois}
    terms.update({i.label: ("I", tuple(i.at), None) for i in m.intersections})

    def touches(kind, at, link, cell):
        if kind == "P":
            return cell == link
        return max(abs(cell[0] - at[0]), abs(cell[1] - at[1])) == 1

    base = nx.Graph()
    base.add_nodes_from(roads)
    for c, r in roads:
        for dc, dr in MOVES:
            if (c + dc, r + dr) in roads:
                base.add_edge((c, r), (c + dc, r + dr))
    out: dict[str, dict[str, int]] = {lab: {} for lab in terms}
    labels = sorted(terms)
    for k, u in enumerate(labels):
        for v in labels[k + 1:]:
            g = base.copy()
            for lab in (u, v):
                kind, at, link = terms[lab]
                g.add_node(lab)
                for cell in roads:
                    if touches(kind, at, link, cell):
                        g.add_edge(lab, cell)
            ku, au, lu = terms[u]
            kv, av, lv = terms[v]
            if touches(ku, au, lu, av) and touches(kv, av, lv, au):
                g.add_edge(u, v)
            if nx.has_path(g, u, v):
                d = nx.shortest_path_length(g, u, v)
                out[u][v] = out[v][u] = d
    return out


def bearing_oracle(a, b) -> str:
    """Eight-sector bearing via atan2, boundaries to the cardinal side."""
    dx, dy = b[0] - a[0], a[1] - b[1]
    ang = math.degrees(math.atan2(dx, dy)) % 360  # clockwise from north
    names = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"]
    k = int(((ang + 22.5) % 360) // 45)
    centre = k * 45
    off = (ang - centre + 180) % 360 - 180
    if abs(abs(off) - 22.5) < 1e-9 and k % 2 == 1:
        # on a boundary next to a diagonal: move to the cardinal neighbour
        k = (k + (1 if off > 0 else -1)) % 8
    return names[k]


def segment_cell_bounds(p0, p1, samples: int = 4000):
    """(cells hit by dense samples, cells whose closed box the segment touches)."""
    (x0, y0), (x1, y1) = p0, p1
    hit = set()
    for k in range(samples + 1):
        t = Fraction(k, samples)
        x, y = x0 + (x1 - x0) * t, y0 + (y1 - y0) * t
        hit.add((math.floor(x), math.floor(y)))
    touch = set()
    lo_c, hi_c = math.floor(min(x0, x1)) - 1, math.floor(max(x0, x1)) + 1
    lo_r, hi_r = math.floor(min(y0, y1)) - 1, math.floor(max(y0, y1)) + 1
    for c in range(lo_c, hi_c + 1):
        for r in range(lo_r, hi_r + 1):
            if _clip(p0, p1, c, r):
                touch.add((c, r))
    return hit, touch


def _clip(p0, p1, c, r) -> bool:
    (x0, y0), (x1, y1) = p0, p1
    t0, t1 = Fraction(0), Fraction(1)
    for p, q in ((-(x1 - x0), x0 - c), (x1 - x0, c + 1 - x0), (-(y1 - y0), y0 - r), (y1 - y0, r + 1 - y0)):
        if p == 0:
            if q < 0:
                return False
            continue
        t = Fraction(q) / p
        if p < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
    return t0 <= t1


def _cell_label(m, cell):
    for p in m.pois:
        if tuple(p.at) == tuple(cell):
            return p.label
    for i in m.intersections:
        if tuple(i.at) == tuple(cell):
            return i.label
    return None


def window_edges(m, at, here: str, radius: int) -> set[frozenset]:
    """Node pairs joined by a plain-road path lying inside the view window.

    A POI other than the observer counts only when its whole neighbourhood
    is visible (Chebyshev distance <= radius - 1).
    """
    ac, ar = at
    inside = lambda c: (max(abs(c[0] - ac), abs(c[1] - ar)) <= radius  # noqa: E731
                        and 0 <= c[0] < m.width and 0 <= c[1] < m.height)
    roads = {(c, r) for r, row in enumerate(m.cells) for c, ch in enumerate(row) if ch == "r" and inside((c, r))}
    terms = {here: None}
    for p in m.pois:
        if inside(p.at) and (p.label == here or max(abs(p.at[0] - ac), abs(p.at[1] - ar)) <= radius - 1):
            terms[p.label] = ("P", tuple(p.at), tuple(p.linked_road))
    for i in m.intersections:
        if inside(i.at):
            terms[i.label] = ("I", tuple(i.at), None)

    def touches(t, cell):
        kind, pos, link = t
        return cell == link if kind == "P" else max(abs(cell[0] - pos[0]), abs(cell[1] - pos[1])) == 1

    base = nx.Graph()
    base.add_nodes_from(roads)
    for c, r in roads:
        for dc, dr in MOVES:
            if (c + dc, r + dr) in roads:
                base.add_edge((c, r), (c + dc, r + dr))
    out = set()
    tu = terms[here]
    for v, tv in terms.items():
        if v == here:
            continue
        g = base.copy()
        for lab, t in ((here, tu), (v, tv)):
            g.add_node(lab)
            for cell in roads:
                if touches(t, cell):
                    g.add_edge(lab, cell)
        if touches(tu, tv[1]) and touches(tv, tu[1]):
            g.add_edge(here, v)
        if nx.has_path(g, here, v):
            out.add(frozenset((here, v)))
    return out


def gm_oracle(m, trace, radius: int = 2) -> tuple[set[str], set[frozenset]]:
    """Expected graph-memory nodes and edges, replayed from the map."""
    nodes, edges = set(), set()
    for ev in trace.events:
        if ev.is_arrival:
            nodes.add(ev.node)
            at = ev.at
            here = _cell_label(m, at)
            assert here == ev.node
            edges |= window_edges(m, at, here, radius)
        elif ev.type == "traverse":
            cells = ev.route.cells
            labels = [_cell_label(m, cells[0])]
            labels += [lab for c in cells[1:-1] if (lab := _cell_label(m, c)) is not None]
            labels.append(_cell_label(m, cells[-1]))
            for a, b in zip(labels, labels[1:]):
                if a != b:
                    edges.add(frozenset((a, b)))
    for e in edges:
        nodes |= e
    return nodes, edges


def visited_cells(trace) -> set[tuple[int, int]]:
    out = set()
    for ev in trace.events:
        if ev.is_arrival:
            out.add(tuple(ev.at))
        elif ev.type == "traverse":
            out |= {tuple(c) for c in ev.route.cells}
    return out
