"""Memory representations folded from exploration traces.

Four builders consume the same event stream:

* SDM: templated narration, one message per event.
* NSM: first-arrival node records plus one record per new POI->POI route.
* GM: topological graph of POIs and intersections.
* MM: nodes placed at their coordinates plus the road curves walked.

Every builder is a pure fold: ``update_*(memory, event)`` returns a new value.
Serialized sizes are measured as 8 bits per UTF-8 byte.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .explore import Event, ExplorationTrace
from .mapenv import CellKind, Coordinate, Observation

FORMAT = "MEMFMT v1"
SDM_TEMPLATE_VERSION = "narration v1"
BLOCK_SEPARATOR = "\n=====\n"
MEMORY_KINDS = ("SDM", "NSM", "GM", "MM", "NSM+SDM", "GM+SDM", "MM+SDM")


class MemoryError_(ValueError):
    pass


# --------------------------------------------------------------------------
# observation helpers


def _node_label(kind: CellKind, ident) -> str | None:
    if ident is None:
        return None
    return ("P" if kind is CellKind.POI else "I") + str(ident)


def _signed(v: int) -> str:
    return f"+{v}" if v > 0 else str(v)


_DIRS = {(0, -1): "N", (1, -1): "NE", (1, 0): "E", (1, 1): "SE",
         (0, 1): "S", (-1, 1): "SW", (-1, 0): "W", (-1, -1): "NW"}
_DIR_ORDER = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")


def road_directions(obs: Observation) -> list[str]:
    """Compass directions of navigable cells touching the observer."""
    out = {_DIRS[(e.dcol, e.drow)] for e in obs.entries
           if (e.dcol, e.drow) in _DIRS and e.kind in (CellKind.ROAD, CellKind.INTERSECTION)}
    return [d for d in _DIR_ORDER if d in out]


def visible_nodes(obs: Observation) -> list[tuple[str, int, int, str | None]]:
    """(label, dcol, drow, name) for every POI/intersection in view except the observer."""
    out = []
    for e in obs.entries:
        label = _node_label(e.kind, e.id)
        if label is not None and (e.dcol, e.drow) != (0, 0):
            out.append((label, e.dcol, e.drow, e.name))
    return out


def visible_adjacency(obs: Observation, here: str) -> dict[str, int]:
    """Nodes whose road connection to ``here`` lies entirely inside the view.

    Works on the observation alone. A visible POI's access cell is inferred
    as its nearest visible road cell, which is only trusted when the POI's
    whole neighbourhood is in view.
    """
    grid = {(e.dcol, e.drow): e for e in obs.entries}
    nav = {k for k, e in grid.items() if e.kind in (CellKind.ROAD, CellKind.INTERSECTION)}
    r = obs.radius

    def nbrs(c):
        for dc in (-1, 0, 1):
            for dr in (-1, 0, 1):
                if dc or dr:
                    yield (c[0] + dc, c[1] + dr)

    def access(c):
        best = None
        for n in nbrs(c):
            if n in nav:
                key = ((n[0] - c[0]) ** 2 + (n[1] - c[1]) ** 2, n[1], n[0])
                if best is None or key < best[0]:
                    best = (key, n)
        return best[1] if best else None

    hang: dict[tuple[int, int], list[str]] = {}
    for k, e in grid.items():
        if e.kind is CellKind.POI and e.id is not None and k != (0, 0) \
                and max(abs(k[0]), abs(k[1])) <= r - 1:
            a = access(k)
            if a is not None:
                hang.setdefault(a, []).append(_node_label(CellKind.POI, e.id))

    adj: dict[str, int] = {}
    if here[0] == "P":
        a = access((0, 0))
        first = [a] if a is not None else []
    else:
        first = [n for n in nbrs((0, 0)) if n in nav]
        for label in hang.get((0, 0), ()):
            adj[label] = 1
    dist = {(0, 0): 0}
    q = deque()
    for c in first:
        dist[c] = 1
        q.append(c)
    while q:
        c = q.popleft()
        d = dist[c]
        e = grid[c]
        if e.kind is CellKind.INTERSECTION:
            label = _node_label(e.kind, e.id)
            if label is not None:
                adj.setdefault(label, d)
            continue
        for label in hang.get(c, ()):
            adj.setdefault(label, d + 1)
        for n in nbrs(c):
            if n in nav and n not in dist:
                dist[n] = d + 1
                q.append(n)
    adj.pop(here, None)
    return adj


# --------------------------------------------------------------------------
# SDM


@dataclass
class DialogueMemory:
    messages: list[tuple[str, str]] = field(default_factory=list)

    def copy(self) -> "DialogueMemory":
        return DialogueMemory(list(self.messages))


def _where(dc: int, dr: int) -> str:
    parts = []
    if dr:
        parts.append(f"{abs(dr)} {'north' if dr < 0 else 'south'}")
    if dc:
        parts.append(f"{abs(dc)} {'east' if dc > 0 else 'west'}")
    return " ".join(parts) or "here"


def _describe_view(obs: Observation) -> str:
    seen = visible_nodes(obs)
    if seen:
        items = []
        for label, dc, dr, name in seen:
            what = f"POI {label} ({name})" if label[0] == "P" else f"intersection {label}"
            items.append(f"{what} {_where(dc, dr)}")
        view = "You can see " + "; ".join(items) + "."
    else:
        view = "No POI or intersection is in view."
    roads = road_directions(obs)
    road = f" Roads lead {', '.join(roads)}." if roads else " No road is adjacent."
    return view + road


def narrate(ev: Event) -> str:
    """Fixed narration templates (``narration v1``)."""
    if ev.type == "traverse":
        via = ev.route.via_intersections
        path = " then ".join(f"I{i}" for i in via) if via else "no intersection"
        return (f"You travel from POI P{ev.from_poi} to POI P{ev.to_poi} in "
                f"{ev.route.length} moves, passing {path}.")
    obs = ev.observation
    where = f"(column {ev.at.col}, row {ev.at.row})"
    name = next((e.name for e in obs.entries if (e.dcol, e.drow) == (0, 0) and e.name), None)
    if ev.kind == "poi":
        place = f"POI {ev.node} ({name})" if name else f"POI {ev.node}"
    else:
        place = f"intersection {ev.node}"
    lead = {
        "start": f"You begin at {place} at {where}.",
        "restart": f"Nothing new is in view; you restart at {place} at {where}.",
        "arrive": f"You arrive at {place} at {where}.",
    }[ev.type]
    return f"{lead} {_describe_view(obs)}"


def update_sdm(mem: DialogueMemory, ev: Event) -> DialogueMemory:
    new = mem.copy()
    new.messages.append(("narrator", narrate(ev)))
    return new


def build_sdm(trace: ExplorationTrace, acknowledge: Callable[[str], str] | None = None) -> DialogueMemory:
    """Narrate a trace. ``acknowledge`` (optional) adds an agent reply after each arrival."""
    mem = DialogueMemory()
    for ev in trace.events:
        text = narrate(ev)
        mem.messages.append(("narrator", text))
        if acknowledge is not None and ev.is_arrival:
            mem.messages.append(("agent", acknowledge(text)))
    return mem


# --------------------------------------------------------------------------
# NSM


@dataclass(frozen=True)
class NodeRecord:
    node: str
    kind: str
    name: str | None
    at: Coordinate
    seen: tuple[tuple[str, int, int, str | None], ...]
    roads: tuple[str, ...]


@dataclass(frozen=True)
class RouteRecord:
    from_poi: str
    to_poi: str
    via: tuple[str, ...]


@dataclass
class NodeSequenceMemory:
    node_records: list[NodeRecord] = field(default_factory=list)
    route_records: list[RouteRecord] = field(default_factory=list)
    _nodes: set = field(default_factory=set, repr=False)
    _routes: set = field(default_factory=set, repr=False)

    def copy(self) -> "NodeSequenceMemory":
        return NodeSequenceMemory(list(self.node_records), list(self.route_records),
                                  set(self._nodes), set(self._routes))

    def apply(self, ev: Event) -> None:
        if ev.is_arrival:
            if ev.node in self._nodes:
                return
            self._nodes.add(ev.node)
            name = next((e.name for e in ev.observation.entries if (e.dcol, e.drow) == (0, 0)), None)
            seen = tuple(visible_nodes(ev.observation))
            self.node_records.append(
                NodeRecord(ev.node, ev.kind, name, Coordinate(*ev.at), seen, tuple(road_directions(ev.observation))))
        elif ev.type == "traverse":
            key = (ev.from_poi, ev.to_poi)
            if key in self._routes or ev.from_poi == ev.to_poi:
                return
            self._routes.add(key)
            self.route_records.append(RouteRecord(
                f"P{ev.from_poi}", f"P{ev.to_poi}", tuple(f"I{i}" for i in ev.route.via_intersections)))


def update_nsm(mem: NodeSequenceMemory, ev: Event) -> NodeSequenceMemory:
    new = mem.copy()
    new.apply(ev)
    return new


# --------------------------------------------------------------------------
# GM


@dataclass
class GraphMemory:
    nodes: dict[str, str] = field(default_factory=dict)  # label -> kind
    edges: dict[frozenset, int] = field(default_factory=dict)  # {a, b} -> moves

    def copy(self) -> "GraphMemory":
        return GraphMemory(dict(self.nodes), dict(self.edges))

    def _edge(self, a: str, b: str, length: int) -> None:
        for x in (a, b):
            self.nodes.setdefault(x, "poi" if x[0] == "P" else "intersection")
        key = frozenset((a, b))
        if key not in self.edges or length < self.edges[key]:
            self.edges[key] = length

    def apply(self, ev: Event) -> None:
        if ev.is_arrival:
            self.nodes.setdefault(ev.node, ev.kind)
            for other, d in visible_adjacency(ev.observation, ev.node).items():
                self._edge(ev.node, other, d)
        elif ev.type == "traverse":
            for a, b, moves, _ in route_legs(ev):
                if a != b:
                    self._edge(a, b, moves)

    def edge_pairs(self) -> set[frozenset]:
        return set(self.edges)

    def neighbors(self, label: str) -> list[tuple[str, int]]:
        out = []
        for key, d in self.edges.items():
            if label in key:
                (other,) = key - {label}
                out.append((other, d))
        return sorted(out, key=lambda t: _label_key(t[0]))


def update_gm(mem: GraphMemory, ev: Event) -> GraphMemory:
    new = mem.copy()
    new.apply(ev)
    return new


# --------------------------------------------------------------------------
# MM


@dataclass(frozen=True)
class PlacedNode:
    label: str
    kind: str
    at: Coordinate
    name: str | None


@dataclass
class MapMemory:
    placed: dict[str, PlacedNode] = field(default_factory=dict)
    relations: dict[str, set] = field(default_factory=dict)  # label -> nodes seen from it
    curves: dict[frozenset, list[tuple[Coordinate, ...]]] = field(default_factory=dict)

    def copy(self) -> "MapMemory":
        return MapMemory(dict(self.placed), {k: set(v) for k, v in self.relations.items()},
                         {k: list(v) for k, v in self.curves.items()})

    def apply(self, ev: Event) -> None:
        if ev.is_arrival:
            if ev.node not in self.placed:
                name = next((e.name for e in ev.observation.entries if (e.dcol, e.drow) == (0, 0)), None)
                self.placed[ev.node] = PlacedNode(ev.node, ev.kind, Coordinate(*ev.at), name)
            rel = self.relations.setdefault(ev.node, set())
            rel.update(label for label, *_ in visible_nodes(ev.observation))
        elif ev.type == "traverse":
            for a, b, _, cells in route_legs(ev):
                if a == b:
                    continue
                key = frozenset((a, b))
                # store curves oriented from the smaller label
                if _label_key(a) > _label_key(b):
                    cells = tuple(reversed(cells))
                known = self.curves.setdefault(key, [])
                if cells not in known:
                    known.append(cells)

    def cells(self) -> set[Coordinate]:
        out = {p.at for p in self.placed.values()}
        for variants in self.curves.values():
            for cells in variants:
                out.update(cells)
        return out


def update_mm(mem: MapMemory, ev: Event) -> MapMemory:
    new = mem.copy()
    new.apply(ev)
    return new


# --------------------------------------------------------------------------
# route legs


def route_legs(ev: Event) -> list[tuple[str, str, int, tuple[Coordinate, ...]]]:
    """Split a traverse event into (node, node, moves, cells) stretches at its intersections."""
    cells = ev.route.cells
    marks = [(f"P{ev.from_poi}", 0)]
    marks += [(f"I{i}", k) for i, k in zip(ev.route.via_intersections, ev.route.via_index)]
    marks.append((f"P{ev.to_poi}", len(cells) - 1))
    return [(a, b, kb - ka, tuple(cells[ka:kb + 1])) for (a, ka), (b, kb) in zip(marks, marks[1:])]


def _label_key(label: str) -> tuple[int, int]:
    return (0 if label[0] == "P" else 1, int(label[1:]))


# --------------------------------------------------------------------------
# folding


_EMPTY = {
    "NSM": NodeSequenceMemory,
    "GM": GraphMemory,
    "MM": MapMemory,
}


def fold(kind: str, events: Iterable[Event], start=None):
    """Apply events in order to a fresh (or given) structured memory."""
    mem = _EMPTY[kind]() if start is None else start.copy()
    for ev in events:
        mem.apply(ev)
    return mem


def build_nsm(trace: ExplorationTrace) -> NodeSequenceMemory:
    return fold("NSM", trace.events)


def build_gm(trace: ExplorationTrace) -> GraphMemory:
    return fold("GM", trace.events)


def build_mm(trace: ExplorationTrace) -> MapMemory:
    return fold("MM", trace.events)


# --------------------------------------------------------------------------
# serialization


def _header(kind: str) -> str:
    return f"{FORMAT} {kind}"


def _fmt_cell(c) -> str:
    return f"({c[0]},{c[1]})"


def serialize_sdm(mem: DialogueMemory) -> str:
    lines = [_header("SDM") + f" {SDM_TEMPLATE_VERSION}"]
    lines += [f"{role}: {text}" for role, text in mem.messages]
    return "\n".join(lines) + "\n"


def serialize_nsm(mem: NodeSequenceMemory) -> str:
    lines = [_header("NSM")]
    for r in mem.node_records:
        name = f" {r.name}" if r.name else ""
        seen = ", ".join(f"{label}{' ' + nm if nm else ''} ({_signed(dc)},{_signed(dr)})"
                         for label, dc, dr, nm in r.seen) or "-"
        roads = " ".join(r.roads) or "-"
        lines.append(f"node {r.node} {r.kind}{name} at {_fmt_cell(r.at)} | sees {seen} | roads {roads}")
    for r in mem.route_records:
        via = " ".join(r.via) or "-"
        lines.append(f"route {r.from_poi}>{r.to_poi} via {via}")
    return "\n".join(lines) + "\n"


def serialize_gm(mem: GraphMemory) -> str:
    lines = [_header("GM")]
    for label in sorted(mem.nodes, key=_label_key):
        nbrs = ", ".join(f"{o}({d})" for o, d in mem.neighbors(label))
        lines.append(f"{label}: {nbrs}" if nbrs else f"{label}:")
    return "\n".join(lines) + "\n"


def serialize_mm(mem: MapMemory) -> str:
    lines = [_header("MM")]
    for label in sorted(mem.placed, key=_label_key):
        p = mem.placed[label]
        name = f" {p.name}" if p.name else ""
        lines.append(f"{label} {p.kind} {_fmt_cell(p.at)}{name}")
    for key in sorted(mem.curves, key=lambda k: sorted(map(_label_key, k))):
        a, b = sorted(key, key=_label_key)
        for cells in sorted(mem.curves[key]):
            lines.append(f"curve {a}-{b}: " + " ".join(f"{c[0]},{c[1]}" for c in cells))
    return "\n".join(lines) + "\n"


_SERIALIZERS = {
    NodeSequenceMemory: ("NSM", serialize_nsm),
    GraphMemory: ("GM", serialize_gm),
    MapMemory: ("MM", serialize_mm),
}


@dataclass(frozen=True)
class MemoryBundle:
    structured: object | None
    dialogue: DialogueMemory | None
    serialized: str
    size_bits: int
    kinds: tuple[str, ...]

    @property
    def label(self) -> str:
        return "+".join(self.kinds)

    def manifest(self, trace_ref: str | None = None) -> dict:
        return {"kinds": list(self.kinds), "size_bits": self.size_bits, "trace_ref": trace_ref}


def size_bits(text: str) -> int:
    return 8 * len(text.encode("utf-8"))


def serialize_bundle(structured=None, dialogue: DialogueMemory | None = None) -> MemoryBundle:
    """Canonical text of a memory or hybrid; structured block first."""
    if structured is None and dialogue is None:
        raise MemoryError_("memory bundle needs at least one part")
    blocks, kinds = [], []
    if structured is not None:
        try:
            kind, fn = _SERIALIZERS[type(structured)]
        except KeyError:
            raise MemoryError_(f"not a structured memory: {type(structured).__name__}") from None
        blocks.append(fn(structured))
        kinds.append(kind)
    if dialogue is not None:
        blocks.append(serialize_sdm(dialogue))
        kinds.append("SDM")
    text = BLOCK_SEPARATOR.join(blocks)
    return MemoryBundle(structured, dialogue, text, size_bits(text), tuple(kinds))


def parse_kind(spec: str) -> tuple[str | None, bool]:
    """'NSM+SDM' -> ('NSM', True); 'SDM' -> (None, True); 'GM' -> ('GM', False)."""
    parts = [p.strip().upper() for p in spec.split("+") if p.strip()]
    if not parts or len(parts) != len(set(parts)):
        raise MemoryError_(f"bad memory kind {spec!r}")
    structured = [p for p in parts if p in _EMPTY]
    unknown = [p for p in parts if p not in _EMPTY and p != "SDM"]
    if unknown or len(structured) > 1:
        raise MemoryError_(f"bad memory kind {spec!r}")
    return (structured[0] if structured else None), "SDM" in parts


def build_memory(trace: ExplorationTrace, kind: str,
                 acknowledge: Callable[[str], str] | None = None) -> MemoryBundle:
    structured_kind, with_dialogue = parse_kind(kind)
    structured = fold(structured_kind, trace.events) if structured_kind else None
    dialogue = build_sdm(trace, acknowledge) if with_dialogue else None
    return serialize_bundle(structured, dialogue)


def dumps_manifest(bundle: MemoryBundle, trace_ref: str | None = None) -> str:
    return json.dumps(bundle.manifest(trace_ref), sort_keys=True)
