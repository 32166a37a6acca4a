"""Bundled fixture maps for the catalog cities."""

from __future__ import annotations

import json
from importlib import resources

from .ingest import CatalogEntry, VectorMapSource, ingest, load_catalog, vector_from_dict
from .mapenv import GridMap, MapError, loads_map


def slug(city: str) -> str:
    return city.lower().replace(" ", "_")


def city_names() -> list[str]:
    return list(load_catalog())


def _data(*parts: str):
    node = resources.files("mapmind.data")
    for p in parts:
        node = node.joinpath(p)
    return node


def city_vector(city: str) -> VectorMapSource:
    node = _data("vector", f"{slug(city)}.json")
    if not node.is_file():
        raise MapError(f"no bundled vector source for {city!r}")
    return vector_from_dict(json.loads(node.read_text(encoding="utf-8")))


def city_map(city: str) -> GridMap:
    """The frozen grid map of a catalog city."""
    node = _data("maps", f"{slug(city)}.json")
    if not node.is_file():
        raise MapError(f"no bundled map for {city!r}")
    return loads_map(node.read_text(encoding="utf-8"))


def city_maps() -> dict[str, GridMap]:
    return {c: city_map(c) for c in city_names()}


def catalog_entry(city: str) -> CatalogEntry:
    try:
        return load_catalog()[city]
    except KeyError:
        raise MapError(f"city {city!r} not in catalog") from None


def resolve_map(ref: str) -> GridMap:
    """A catalog city name or a path to a map file."""
    cat = load_catalog()
    for name in cat:
        if ref.lower() in (name.lower(), slug(name)):
            return city_map(name)
    from .mapenv import load_map

    return load_map(ref)


def rebuild(city: str) -> GridMap:
    return ingest(city_vector(city))
