"""How the localization compute budget and Earth round trips limit traverse speed.

    python demos/budget_vs_speed.py [--seeds N]
"""

import argparse
import dataclasses

from marsnav.config import MissionConfig


def main():
    from marsnav.mission import run_mission

    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    base = MissionConfig(goals=((20.0, 0.0),), control_dt=10.0)

    print("budget [s]  mean speed [m/h]  localization updates")
    for budget in (1.0, 10.0, 30.0, 90.0, 180.0):
        reps = [run_mission(dataclasses.replace(base, seed=s, compute_budget=budget)).report
                for s in range(args.seeds)]
        speed = sum(r.distance for r in reps) / sum(r.elapsed for r in reps) * 3600.0
        updates = sum(r.localization_updates for r in reps) / len(reps)
        print(f"{budget:10.0f}  {speed:16.2f}  {updates:20.1f}")

    sol = base.comm.sol_length
    earth = [run_mission(dataclasses.replace(base, seed=s, mode="earth_in_loop", compute_budget=1.0,
                                             max_sim_time=2 * sol)).report
             for s in range(args.seeds)]
    per_sol = sum(r.distance for r in earth) / sum(r.elapsed for r in earth) * sol
    print(f"\nearth in the loop: {per_sol:.1f} m per sol "
          f"({base.comm.windows_per_sol} windows, {base.comm.one_way_delay:.0f} s each way)")


if __name__ == "__main__":
    main()
