"""Walk one city, then look at what each memory kind kept.

    python demos/explore_and_remember.py [City]
"""

from __future__ import annotations

import sys

from mapmind.cities import city_map
from mapmind.explore import EpisodeConfig, run_episode
from mapmind.mapenv import observe
from mapmind.memory import build_memory

city = sys.argv[1] if len(sys.argv) > 1 else "Paris"
m = city_map(city)
print(f"{city}: {len(m.pois)} POIs, {len(m.intersections)} intersections on a {m.width}x{m.height} grid\n")
print("\n".join(m.cells))

# The agent only ever sees a 5x5 window around itself.
start = m.poi(1)
view = observe(m, start.at, radius=2)
print(f"\nFrom {start.name} at {tuple(start.at)} the agent sees {len(view.entries)} non-empty cells")

trace = run_episode(m, EpisodeConfig("NPS", n=1, seed=0))
kinds = [ev.type for ev in trace.events]
print(f"\nNearest-POI walk: {len(trace.events)} events "
      f"({kinds.count('traverse')} traversals, {kinds.count('restart')} restarts)")

for kind in ("SDM", "NSM", "MM", "GM"):
    bundle = build_memory(trace, kind)
    head = bundle.serialized.splitlines()[1:4]
    print(f"\n{kind}: {bundle.size_bits} bits")
    for line in head:
        print("   ", line[:100])
