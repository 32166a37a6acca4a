"""Generate the 24 questions for a city and answer them with three endpoints.

The scripted oracle reads the true map and never misses; the scripted random
endpoint guesses. Set MAPMIND_API_KEY and pass --remote URL MODEL to also
query an OpenAI-compatible server.

    python demos/ask_questions.py [--remote URL MODEL]
"""

from __future__ import annotations

import argparse

from mapmind.cities import city_map
from mapmind.explore import EpisodeConfig, run_episode
from mapmind.memory import build_memory
from mapmind.reason import RemoteChat, ScriptedOracle, ScriptedRandom, run_scheme
from mapmind.tasks import generate_tasks

ap = argparse.ArgumentParser()
ap.add_argument("--city", default="London")
ap.add_argument("--scheme", default="DT")
ap.add_argument("--remote", nargs=2, metavar=("URL", "MODEL"))
args = ap.parse_args()

m = city_map(args.city)
items = [it for it in generate_tasks(m, seed=0) if not it.degenerate]
bundle = build_memory(run_episode(m, EpisodeConfig("NPS", 1, seed=0)), "NSM")

print(items[0].render(), "\n")
print(items[-1].render(), "\n")

endpoints = [ScriptedOracle(), ScriptedRandom(seed=3)]
if args.remote:
    endpoints.append(RemoteChat("remote", args.remote[1], args.remote[0]))

for ep in endpoints:
    right = 0
    for it in items:
        out = run_scheme(ep, bundle, it, args.scheme, m=m)
        right += out.choice == it.correct
    print(f"{ep.name:>8}: {right}/{len(items)} correct under {args.scheme}")
