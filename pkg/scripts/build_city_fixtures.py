"""Regenerate the bundled vector sources and grid maps for the catalog cities.

Each city gets a constructed road layout whose ingested grid matches the
catalog's POI, intersection and main-road counts exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

from mapmind.cities import slug
from mapmind.ingest import check_catalog, ingest, load_catalog, vector_to_dict
from mapmind.mapenv import dumps_map, validate_map
from mapmind.synth import city_source
from mapmind.tasks import quadrant_counts

DATA = Path(__file__).resolve().parents[1] / "src" / "mapmind" / "data"


def main() -> None:
    (DATA / "vector").mkdir(exist_ok=True)
    (DATA / "maps").mkdir(exist_ok=True)
    for city, entry in load_catalog().items():
        # the density items need a unique busiest and emptiest quadrant
        for seed in range(200):
            src = city_source(city, entry.poi_count, entry.intersection_count, entry.main_road_count, seed)
            m = ingest(src)
            counts = sorted(quadrant_counts(m).values())
            if counts[0] < counts[1] and counts[2] < counts[3]:
                break
        else:
            raise SystemExit(f"{city}: no layout with distinct extreme quadrants")
        report = validate_map(m, entry)
        assert report.ok, (city, report.rules())
        assert check_catalog(m, entry).ok, city
        (DATA / "vector" / f"{slug(city)}.json").write_text(
            json.dumps(vector_to_dict(src), indent=1) + "\n", encoding="utf-8")
        (DATA / "maps" / f"{slug(city)}.json").write_text(dumps_map(m), encoding="utf-8")
        print(f"{city:12s} pois={len(m.pois):2d} intersections={len(m.intersections):2d} "
              f"main roads={m.main_road_count():2d}")


if __name__ == "__main__":
    main()
