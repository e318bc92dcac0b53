"""Drive 50 m through a dense rock field and save the map the rover built.

    python demos/obstacle_field.py [--seed N] [--out DIR]
"""

import argparse
import dataclasses
from pathlib import Path

from marsnav.config import MissionConfig
from marsnav.io import write_pgm, write_telemetry
from marsnav.mission import render_map_snapshot, run_mission
from marsnav.terrain import TerrainParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--out", default="demo_out/obstacle_field")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = MissionConfig(seed=args.seed, terrain=TerrainParams(rock_density=0.05),
                        goals=((50.0, 0.0),), compute_budget=1.0, control_dt=10.0)
    res = run_mission(cfg)
    print(res.report.summary())
    rocks = len(res.terrain.rocks)
    print(f"terrain has {rocks} rocks; the map holds {res.map.point_count()} points")

    write_telemetry(out / "telemetry.csv", res.telemetry)
    write_pgm(out / "map.pgm", render_map_snapshot(res.map), "final traversability map")
    phases = {}
    for r in res.telemetry:
        phases[r.phase] = phases.get(r.phase, 0) + 1
    print("cycles by phase:", ", ".join(f"{k} {v}" for k, v in sorted(phases.items())))
    print(f"wrote {out}/telemetry.csv and {out}/map.pgm")
    return dataclasses.asdict(res.report)


if __name__ == "__main__":
    main()
