"""Run the three experiment phases offline and print the pooled tables.

Phase I varies the exploration strategy, Phase II the memory kind and
Phase III the reasoning scheme. Results land in results/demo-<phase>/.
"""

from __future__ import annotations

from pathlib import Path

from mapmind.harness import ExperimentConfig, aggregate, emit_reports, run_matrix

ENDPOINTS = [{"name": "oracle", "kind": "scripted-oracle"},
             {"name": "random", "kind": "scripted-random", "seed": 1}]

for phase in ("I", "II", "III"):
    cfg = ExperimentConfig.preset(phase, endpoints=ENDPOINTS, run_id=f"demo-{phase}")
    out = Path("results") / cfg.run_id
    results = run_matrix(cfg, out)
    emit_reports(results, out)
    print(f"\nPhase {phase} ({len(results)} city cells) -> {out}")
    for row in sorted(aggregate(results), key=lambda r: r.key):
        acc = " ".join(f"{c}={'n/a' if v is None else f'{v:.2f}'}" for c, v in row.accuracy.items())
        print(f"  {'/'.join(row.key):<28} total={row.total:.3f}  bits={row.size_bits:8.1f}  {acc}")
