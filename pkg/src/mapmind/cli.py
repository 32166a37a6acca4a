"""Command-line entry point: ``mapmind <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__


def _load_defaults(args, section: str) -> None:
    """Fill unset options from the ``[section]`` table of ``--config``."""
    if not getattr(args, "config", None):
        return
    from .harness import tomllib

    with open(args.config, "rb") as fh:
        doc = tomllib.load(fh)
    for key, value in doc.get(section, {}).items():
        attr = key.replace("-", "_")
        if getattr(args, attr, None) is None:
            setattr(args, attr, value)


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_ingest(args) -> int:
    from .cities import city_vector
    from .ingest import ingest, load_vector
    from .mapenv import dumps_map

    src = load_vector(args.input) if Path(args.input).exists() else city_vector(args.input)
    m = ingest(src, args.width or 20, args.height or 20)
    _write(dumps_map(m), args.out)
    return 0


def cmd_validate(args) -> int:
    from .cities import resolve_map
    from .ingest import check_catalog, load_catalog
    from .mapenv import validate_map

    m = resolve_map(args.map)
    entry = load_catalog().get(args.city or m.city_name) if (args.city or args.catalog) else None
    report = validate_map(m, entry)
    doc = {"ok": report.ok, "violations": [list(v) for v in report.violations]}
    if entry is not None:
        cat = check_catalog(m, entry)
        doc["catalog"] = {k: list(v) for k, v in cat.fields.items()}
    _write(json.dumps(doc, indent=1, sort_keys=True) + "\n", args.out)
    return 0 if report.ok else 1


def cmd_explore(args) -> int:
    from .cities import resolve_map
    from .explore import EpisodeConfig, dumps_trace, run_episode

    m = resolve_map(args.map)
    cfg = EpisodeConfig(args.strategy or "NPS", int(args.n or 1), int(args.radius or 2), int(args.seed or 0))
    _write(dumps_trace(run_episode(m, cfg)), args.out)
    return 0


def cmd_memorize(args) -> int:
    from .explore import load_trace
    from .memory import build_memory, dumps_manifest

    trace = load_trace(args.trace)
    bundle = build_memory(trace, args.kind or "SDM")
    _write(bundle.serialized, args.out)
    manifest = dumps_manifest(bundle, str(args.trace)) + "\n"
    if args.manifest:
        _write(manifest, args.manifest)
    elif args.out:
        sys.stdout.write(manifest)
    return 0


def cmd_tasks(args) -> int:
    from .cities import resolve_map
    from .tasks import dumps_tasks, generate_tasks

    m = resolve_map(args.map)
    items = generate_tasks(m, int(args.seed or 0), args.metric or "euclidean")
    _write(dumps_tasks(items), args.out)
    return 0


def cmd_eval(args) -> int:
    from dataclasses import replace

    from .harness import ExperimentConfig, emit_reports, run_matrix

    if not args.config:
        raise ValueError("eval needs --config")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=int(args.seed))
    if args.repeats is not None:
        cfg = replace(cfg, repeats=int(args.repeats))
    out = Path(args.out or Path("results") / cfg.run_id)
    results = run_matrix(cfg, out)
    emit_reports(results, out)
    errors = [r for r in results if r.error]
    print(json.dumps({"out": str(out), "cells": len(results), "errors": len(errors)}))
    return 0


def cmd_report(args) -> int:
    from .harness import emit_reports, load_results

    results = load_results(args.results)
    if not results:
        raise ValueError(f"no finished cells under {args.results}")
    emit_reports(results, args.out or args.results)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mapmind", description="Map exploration, memory and spatial reasoning runs.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--config", default=None, help="TOML file")
        sp.add_argument("--out", default=None, help="output path (stdout if omitted)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("ingest", cmd_ingest, "vector source (or catalog city) to grid map")
    sp.add_argument("input")
    sp.add_argument("--width", type=int, default=None)
    sp.add_argument("--height", type=int, default=None)

    sp = add("validate", cmd_validate, "check map invariants")
    sp.add_argument("map", help="map file or catalog city")
    sp.add_argument("--city", default=None, help="catalog row to compare counts against")
    sp.add_argument("--catalog", action="store_true", help="compare with the map's own catalog row")

    sp = add("explore", cmd_explore, "run one exploration episode")
    sp.add_argument("map")
    sp.add_argument("--strategy", choices=["NPS", "RVS", "TDS"], default=None)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--radius", type=int, default=None)

    sp = add("memorize", cmd_memorize, "build a memory bundle from a trace")
    sp.add_argument("trace")
    sp.add_argument("--kind", default=None, help="SDM, NSM, GM, MM or a hybrid such as NSM+SDM")
    sp.add_argument("--manifest", default=None)

    sp = add("tasks", cmd_tasks, "generate the task file for a map")
    sp.add_argument("map")
    sp.add_argument("--metric", choices=["euclidean", "road"], default=None)

    sp = add("eval", cmd_eval, "run an experiment matrix from a config file")
    sp.add_argument("--repeats", type=int, default=None)

    sp = add("report", cmd_report, "rebuild reports from a results directory")
    sp.add_argument("results")
    return p


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command != "eval":
            _load_defaults(args, args.command)
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1


def main() -> None:
    sys.exit(cli_dispatch())
