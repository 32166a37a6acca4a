"""Experiment matrices: explore, memorize, generate tasks, reason, score, report."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cities import city_names, resolve_map
from .explore import STRATEGIES, EpisodeConfig, ExplorationTrace, load_trace, run_episode, save_trace
from .mapenv import GridMap
from .memory import MEMORY_KINDS, MemoryBundle, build_memory
from .reason import SCHEMES, Endpoint, Outcome, Scheme, make_endpoint, parse_scheme, reply_log_lines, run_scheme
from .tasks import CATEGORIES, LETTERS, TaskItem, generate_tasks

RESULT_VERSION = "cell v1"

PHASES = {
    "I": {"strategies": list(STRATEGIES), "memories": ["SDM"], "schemes": ["DT"]},
    "II": {"strategies": ["NPS"], "memories": list(MEMORY_KINDS), "schemes": ["DT"]},
    "III": {"strategies": ["NPS"], "memories": ["NSM"], "schemes": list(SCHEMES)},
}
_PHASE_ALIASES = {"1": "I", "2": "II", "3": "III", "i": "I", "ii": "II", "iii": "III"}


class ExperimentError(ValueError):
    pass


# --------------------------------------------------------------------------
# config


@dataclass
class ExperimentConfig:
    cities: list[str] = field(default_factory=city_names)
    strategies: list[str] = field(default_factory=lambda: ["NPS"])
    memories: list[str] = field(default_factory=lambda: ["SDM"])
    schemes: list[str] = field(default_factory=lambda: ["DT"])
    endpoints: list[dict] = field(default_factory=lambda: [{"name": "oracle", "kind": "scripted-oracle"}])
    n: int = 1
    seed: int = 0
    radius: int = 2
    repeats: int = 1
    metric: str = "euclidean"
    in_flight: int = 1
    run_id: str = "run"

    def __post_init__(self):
        for axis in ("cities", "strategies", "memories", "schemes", "endpoints"):
            if not getattr(self, axis):
                raise ExperimentError(f"matrix axis {axis!r} is empty")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ExperimentError(f"unknown strategy {s!r}")
        for mk in self.memories:
            if mk not in MEMORY_KINDS:
                raise ExperimentError(f"unknown memory {mk!r}")
        self.schemes = [parse_scheme(s).kind for s in self.schemes]
        names = [e.get("name", e.get("kind")) for e in self.endpoints]
        if len(set(names)) != len(names):
            raise ExperimentError("endpoint names must be unique")
        if self.n < 1 or self.repeats < 1 or self.in_flight < 1:
            raise ExperimentError("n, repeats and in_flight must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ExperimentError("seed must be a 64-bit unsigned integer")

    @classmethod
    def preset(cls, phase: str, **kw) -> "ExperimentConfig":
        key = _PHASE_ALIASES.get(str(phase).lower(), str(phase).upper())
        if key not in PHASES:
            raise ExperimentError(f"unknown phase {phase!r}")
        return cls(**{**PHASES[key], **kw})

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ExperimentError(f"bad config: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_toml(fh.read())

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        run = doc.get("run", {})
        matrix = dict(doc.get("matrix", {}))
        kw: dict = {}
        phase = matrix.pop("phase", None)
        if phase is not None:
            key = _PHASE_ALIASES.get(str(phase).lower(), str(phase).upper())
            if key not in PHASES:
                raise ExperimentError(f"unknown phase {phase!r}")
            kw.update(PHASES[key])
        for axis in ("strategies", "memories", "schemes"):
            if axis in matrix:
                kw[axis] = list(matrix.pop(axis))
        if matrix:
            raise ExperimentError(f"unknown matrix keys: {sorted(matrix)}")
        cities = doc.get("cities", {})
        names = list(cities.get("names", []))
        if names == ["all"]:
            names = city_names()
        names += [str(p) for p in cities.get("paths", [])]
        if names:
            kw["cities"] = names
        eps = doc.get("endpoint", {})
        if eps:
            kw["endpoints"] = [{"name": name, **block} for name, block in eps.items()]
        for key in ("n", "seed", "radius", "repeats"):
            if key in run:
                kw[key] = int(run[key])
        if "metric" in run:
            kw["metric"] = str(run["metric"])
        if "name" in run:
            kw["run_id"] = str(run["name"])
        limits = doc.get("limits", {})
        if "in_flight" in limits:
            kw["in_flight"] = int(limits["in_flight"])
        if "rate" in limits:
            for e in kw.get("endpoints", []):
                e.setdefault("rate", float(limits["rate"]))
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# seeds


def derive_seed(master: int, *parts) -> int:
    """64-bit seed from the master seed and a key, stable across runs and platforms."""
    raw = json.dumps([master, *parts], separators=(",", ":")).encode()
    return int.from_bytes(hashlib.sha256(raw).digest()[:8], "big")


def trace_seed(cfg: ExperimentConfig, city: str, strategy: str, repeat: int) -> int:
    # shared by every memory/scheme/endpoint cell so exploration is fixed
    return derive_seed(cfg.seed, "trace", city, strategy, cfg.n, cfg.radius, repeat)


def task_seed(cfg: ExperimentConfig, city: str) -> int:
    return derive_seed(cfg.seed, "tasks", city)


# --------------------------------------------------------------------------
# results


@dataclass
class ItemRecord:
    task_id: str
    category: str
    chosen: str | None
    correct_option: str
    correct: bool
    invalid: bool
    flags: list[str] = field(default_factory=list)
    reply_ref: str = ""


@dataclass
class RunResult:
    city: str
    strategy: str
    memory: str
    scheme: str
    endpoint: str
    repeat: int
    seed: int
    size_bits: int
    items: list[ItemRecord] = field(default_factory=list)
    degenerate: dict[str, int] = field(default_factory=dict)
    error: str | None = None

    @property
    def key(self) -> tuple:
        return (self.city, self.strategy, self.memory, self.scheme, self.endpoint, self.repeat)

    def tally(self) -> dict[str, tuple[int, int]]:
        out = {c: [0, 0] for c in CATEGORIES}
        for it in self.items:
            out[it.category][0] += int(it.correct)
            out[it.category][1] += 1
        return {c: (v[0], v[1]) for c, v in out.items()}

    @property
    def category_accuracy(self) -> dict[str, float | None]:
        return {c: (k / n if n else None) for c, (k, n) in self.tally().items()}

    @property
    def total_accuracy(self) -> float | None:
        n = len(self.items)
        return sum(it.correct for it in self.items) / n if n else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format"] = RESULT_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        d = dict(d)
        d.pop("format", None)
        d["items"] = [ItemRecord(**it) for it in d.get("items", [])]
        return cls(**d)


def cell_id(cfg: ExperimentConfig, key: tuple) -> str:
    raw = json.dumps([RESULT_VERSION, cfg.seed, cfg.n, cfg.radius, cfg.metric, *key], separators=(",", ":"))
    return hashlib.sha256(raw.encode()).hexdigest()[:16]


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# matrix


class _Caches:
    def __init__(self, root: Path | None):
        self.root = root
        self.maps: dict[str, GridMap] = {}
        self.traces: dict[tuple, ExplorationTrace] = {}
        self.bundles: dict[tuple, MemoryBundle] = {}
        self.tasks: dict[str, list[TaskItem]] = {}

    def map(self, ref: str) -> GridMap:
        if ref not in self.maps:
            self.maps[ref] = resolve_map(ref)
        return self.maps[ref]

    def trace(self, cfg, ref: str, strategy: str, repeat: int) -> ExplorationTrace:
        seed = trace_seed(cfg, ref, strategy, repeat)
        key = (ref, strategy, cfg.n, cfg.radius, seed)
        if key in self.traces:
            return self.traces[key]
        path = None
        if self.root is not None:
            safe = "".join(ch if ch.isalnum() else "_" for ch in ref)
            path = self.root / "traces" / f"{safe}-{strategy}-n{cfg.n}-r{cfg.radius}-{seed}.jsonl"
        if path is not None and path.exists():
            trace = load_trace(path)
        else:
            trace = run_episode(self.map(ref), EpisodeConfig(strategy, cfg.n, cfg.radius, seed))
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                save_trace(trace, path)
        self.traces[key] = trace
        return trace

    def bundle(self, cfg, ref, strategy, repeat, memory) -> MemoryBundle:
        key = (ref, strategy, repeat, memory)
        if key not in self.bundles:
            self.bundles[key] = build_memory(self.trace(cfg, ref, strategy, repeat), memory)
        return self.bundles[key]

    def items(self, cfg, ref) -> list[TaskItem]:
        if ref not in self.tasks:
            self.tasks[ref] = generate_tasks(self.map(ref), task_seed(cfg, ref), cfg.metric)
        return self.tasks[ref]


def iter_cells(cfg: ExperimentConfig) -> Iterable[tuple]:
    names = [e.get("name", e.get("kind")) for e in cfg.endpoints]
    for repeat in range(cfg.repeats):
        for city in cfg.cities:
            for strategy in cfg.strategies:
                for memory in cfg.memories:
                    for scheme in cfg.schemes:
                        for ep in names:
                            yield (city, strategy, memory, scheme, ep, repeat)


def run_cell(cfg: ExperimentConfig, key: tuple, endpoint: Endpoint, caches: _Caches,
             replies_dir: Path | None = None) -> RunResult:
    city, strategy, memory, scheme, ep_name, repeat = key
    cid = cell_id(cfg, key)
    seed = trace_seed(cfg, city, strategy, repeat)
    try:
        m = caches.map(city)
        bundle = caches.bundle(cfg, city, strategy, repeat, memory)
        items = caches.items(cfg, city)
    except Exception as exc:  # noqa: BLE001 - a broken map skips its cell
        return RunResult(city, strategy, memory, scheme, ep_name, repeat, seed, 0,
                         error=f"{type(exc).__name__}: {exc}")
    scoring = [it for it in items if not it.degenerate]
    degenerate = {c: sum(1 for it in items if it.degenerate and it.category == c) for c in CATEGORIES}
    sch = Scheme(scheme)

    def one(item: TaskItem) -> Outcome:
        return run_scheme(endpoint, bundle, item, sch, m=m, key=f"{cid}:{item.id}")

    if cfg.in_flight > 1:
        with ThreadPoolExecutor(max_workers=cfg.in_flight) as pool:
            outcomes = list(pool.map(one, scoring))
    else:
        outcomes = [one(it) for it in scoring]

    records, log = [], []
    for item, out in zip(scoring, outcomes):
        ref = f"replies/{cid}.jsonl#{item.id}"
        records.append(ItemRecord(
            item.id, item.category,
            None if out.choice is None else LETTERS[out.choice],
            item.correct_letter, out.choice == item.correct, out.invalid,
            list(out.flags) + (["invalid"] if out.invalid else []), ref))
        log += reply_log_lines(out, {"cell": cid, "task_id": item.id, "scheme": scheme,
                                     **({"tot": out.extra} if out.extra else {})})
    if replies_dir is not None:
        _atomic_write(replies_dir / f"{cid}.jsonl", "".join(line + "\n" for line in log))
    return RunResult(city, strategy, memory, scheme, ep_name, repeat, seed, bundle.size_bits,
                     records, degenerate)


def run_matrix(cfg: ExperimentConfig, out_dir=None, endpoints: dict[str, Endpoint] | None = None,
               progress=None) -> list[RunResult]:
    """Run every cell; with ``out_dir`` finished cells are stored and skipped on rerun."""
    root = Path(out_dir) if out_dir is not None else None
    if endpoints is None:
        endpoints = {}
        for spec in cfg.endpoints:
            ep = make_endpoint(spec)
            endpoints[spec.get("name", spec.get("kind"))] = ep
    caches = _Caches(root)
    results = []
    for key in iter_cells(cfg):
        cid = cell_id(cfg, key)
        path = root / "cells" / f"{cid}.json" if root is not None else None
        if path is not None and path.exists():
            res = RunResult.from_dict(json.loads(path.read_text(encoding="utf-8")))
        else:
            res = run_cell(cfg, key, endpoints[key[4]], caches,
                           root / "replies" if root is not None else None)
            if path is not None and res.error is None:
                _atomic_write(path, json.dumps(res.to_dict(), sort_keys=True, indent=1) + "\n")
        results.append(res)
        if progress is not None:
            progress(res)
    if root is not None:
        _atomic_write(root / "config.json", json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")
    return results


def load_results(out_dir) -> list[RunResult]:
    cells = sorted((Path(out_dir) / "cells").glob("*.json"))
    res = [RunResult.from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in cells]
    return sorted(res, key=lambda r: (r.strategy, r.memory, r.scheme, r.endpoint, r.city, r.repeat))


# --------------------------------------------------------------------------
# aggregation


@dataclass
class AggregateRow:
    strategy: str
    memory: str
    scheme: str
    endpoint: str
    tally: dict[str, tuple[int, int]]
    degenerate: dict[str, int]
    size_bits: float
    cells: int

    @property
    def accuracy(self) -> dict[str, float | None]:
        return {c: (k / n if n else None) for c, (k, n) in self.tally.items()}

    @property
    def total(self) -> float | None:
        k = sum(v[0] for v in self.tally.values())
        n = sum(v[1] for v in self.tally.values())
        return k / n if n else None

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.strategy, self.memory, self.scheme, self.endpoint)


def aggregate(results: Sequence[RunResult]) -> list[AggregateRow]:
    """Pool cities (and repeats) per (strategy, memory, scheme, endpoint)."""
    groups: dict[tuple, list[RunResult]] = {}
    for r in results:
        if r.error is None:
            groups.setdefault((r.strategy, r.memory, r.scheme, r.endpoint), []).append(r)
    rows = []
    for key, rs in groups.items():
        tally = {c: [0, 0] for c in CATEGORIES}
        deg = {c: 0 for c in CATEGORIES}
        for r in rs:
            for c, (k, n) in r.tally().items():
                tally[c][0] += k
                tally[c][1] += n
            for c, d in r.degenerate.items():
                deg[c] += d
        size = sum(r.size_bits for r in rs) / len(rs)
        rows.append(AggregateRow(*key, {c: tuple(v) for c, v in tally.items()}, deg, size, len(rs)))
    return rows


def _fmt(v: float | None) -> str:
    return "n/a" if v is None else repr(float(v))


def _pct(v: float | None) -> str:
    return "n/a" if v is None else f"{100 * v:.2f}%"


CSV_HEADER = ["strategy", "memory", "scheme", "endpoint", *CATEGORIES, "total"]


def cells_csv(rows: Sequence[AggregateRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(rows, key=lambda r: r.key):
        acc = r.accuracy
        w.writerow([*r.key, *(_fmt(acc[c]) for c in CATEGORIES), _fmt(r.total)])
    return buf.getvalue()


def parse_cells_csv(text: str) -> dict[tuple, dict[str, float | None]]:
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        key = tuple(row[k] for k in CSV_HEADER[:4])
        out[key] = {k: (None if row[k] == "n/a" else float(row[k])) for k in (*CATEGORIES, "total")}
    return out


def city_cells_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["city", "repeat", *CSV_HEADER, "size_bits", "error"])
    for r in sorted(results, key=lambda r: (r.strategy, r.memory, r.scheme, r.endpoint, r.city, r.repeat)):
        acc = r.category_accuracy
        w.writerow([r.city, r.repeat, r.strategy, r.memory, r.scheme, r.endpoint,
                    *(_fmt(acc[c]) for c in CATEGORIES), _fmt(r.total_accuracy), r.size_bits, r.error or ""])
    return buf.getvalue()


def items_jsonl(results: Sequence[RunResult]) -> str:
    lines = []
    for r in sorted(results, key=lambda r: (r.strategy, r.memory, r.scheme, r.endpoint, r.city, r.repeat)):
        for it in r.items:
            lines.append(json.dumps({"city": r.city, "strategy": r.strategy, "memory": r.memory,
                                     "scheme": r.scheme, "endpoint": r.endpoint, "repeat": r.repeat,
                                     **asdict(it)}, ensure_ascii=False, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def memsize_csv(rows: Sequence[AggregateRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["memory", "strategy", "scheme", "endpoint", "size_bits", "total"])
    for r in sorted(rows, key=lambda r: (MEMORY_KINDS.index(r.memory), r.strategy, r.scheme, r.endpoint)):
        w.writerow([r.memory, r.strategy, r.scheme, r.endpoint, f"{r.size_bits:.1f}", _fmt(r.total)])
    return buf.getvalue()


def summary_markdown(rows: Sequence[AggregateRow]) -> str:
    """Category-by-configuration accuracy tables, one per endpoint and varied axis."""
    out = ["# Results", ""]
    for ep in sorted({r.endpoint for r in rows}):
        mine = [r for r in rows if r.endpoint == ep]
        for axis, idx in (("strategy", 0), ("memory", 1), ("scheme", 2)):
            others = {tuple(v for j, v in enumerate(r.key[:3]) if j != idx) for r in mine}
            for fixed in sorted(others):
                cols = [r for r in mine if tuple(v for j, v in enumerate(r.key[:3]) if j != idx) == fixed]
                if len(cols) < 2 and axis != "strategy":
                    continue
                names = [r.key[idx] for r in cols]
                fixed_txt = ", ".join(fixed)
                out.append(f"## {ep}: by {axis} ({fixed_txt})")
                out.append("")
                out.append("| Category | " + " | ".join(names) + " |")
                out.append("|---" * (len(names) + 1) + "|")
                for c in CATEGORIES:
                    cells = [f"{_pct(r.accuracy[c])} ({r.tally[c][1]})" for r in cols]
                    out.append(f"| {c} | " + " | ".join(cells) + " |")
                out.append("| Total | " + " | ".join(_pct(r.total) for r in cols) + " |")
                if axis == "memory":
                    out.append("| Size (bits) | " + " | ".join(f"{r.size_bits:.1f}" for r in cols) + " |")
                out.append("")
    return "\n".join(out)


def emit_reports(results: Sequence[RunResult], out_dir) -> dict[str, Path]:
    root = Path(out_dir)
    rows = aggregate(results)
    files = {
        "cells.csv": cells_csv(rows),
        "cells_by_city.csv": city_cells_csv(results),
        "items.jsonl": items_jsonl(results),
        "memsize.csv": memsize_csv(rows),
        "summary.md": summary_markdown(rows),
    }
    written = {}
    for name, text in files.items():
        path = root / name
        _atomic_write(path, text)
        written[name] = path
    return written
