"""Exploration, memory and spatial reasoning on symbolic grid maps."""

from __future__ import annotations

__version__ = "0.1.0"

from .cities import city_map, city_names
from .explore import EpisodeConfig, ExplorationTrace, run_episode
from .ingest import ingest, rasterize
from .mapenv import GridMap, load_map, observe, shortest_route, validate_map
from .memory import build_memory, serialize_bundle
from .tasks import generate_tasks

__all__ = [
    "EpisodeConfig",
    "ExplorationTrace",
    "GridMap",
    "build_memory",
    "city_map",
    "city_names",
    "generate_tasks",
    "ingest",
    "load_map",
    "observe",
    "rasterize",
    "run_episode",
    "serialize_bundle",
    "shortest_route",
    "validate_map",
]
