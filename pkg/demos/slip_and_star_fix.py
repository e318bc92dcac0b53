"""Reactive slip detection and a night-time star fix cancelling gyro drift.

    python demos/slip_and_star_fix.py
"""

import math

from marsnav.config import MissionConfig
from marsnav.localization import PoseEstimate, dead_reckon_step, fuse_pose
from marsnav.mission import run_mission
from marsnav.sensing import (BodyMotion, ImuConfig, StarTrackerConfig, sample_imu,
                             sample_star_fix, sample_wheel_odometry)
from marsnav.terrain import RegolithSpec, TerrainParams


def main():
    for slip in (0.1, 0.6):
        cfg = MissionConfig(seed=1, control_dt=1.0, compute_budget=1.0, max_sim_time=60.0,
                            terrain=TerrainParams(rock_density=0.02, regolith=RegolithSpec(
                                base_slip=slip, slope_slip_gain=0.0)))
        res = run_mission(cfg)
        hits = [r for r in res.telemetry if r.hazard == "stop_and_replan"]
        when = f"first at t = {hits[0].time:.0f} s" if hits else "never"
        print(f"ground slip {slip}: slip alarm {when}, {len(hits)} replans in 60 s")

    est = PoseEstimate()
    imu = ImuConfig(gyro_bias=0.001)
    driven = 0.0
    for _ in range(474):
        odom, _ = sample_wheel_odometry(152.0 * 10.0 / 3600.0, 0.0)
        driven += odom.encoder_distance
        est = dead_reckon_step(est, sample_imu(BodyMotion(), imu), odom, 10.0)
    print(f"\nafter {driven:.0f} m with a 0.001 rad/s gyro bias: heading error "
          f"{math.degrees(est.mean.heading):.1f} deg (wrapped)")
    fix = sample_star_fix(0.0, 0.0, StarTrackerConfig(sigma=0.0))
    est = fuse_pose(est, star=fix)
    print(f"after one star fix at midnight: heading error {est.mean.heading:.1e} rad")


if __name__ == "__main__":
    main()
