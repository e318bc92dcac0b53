"""Closed-loop traverse simulation: sense, localize, map, react, select, drive.

Timekeeping: ``clock`` starts at 0 when the mission starts; local solar
time is ``start_time_of_day * sol_length + clock``, midnight at 0.

The compute budget is the minimum interval between two visual-odometry
updates.  Between updates the rover dead-reckons and may drive at most
``max_drive_per_update`` metres of wheel travel; beyond that it halts and
waits for the next fix, which is what turns a slow localizer into a slow
rover.

In ``earth_in_loop`` mode the map products and the path choice are made on
the ground: the rover's images go up at the next communication window and
the answer lands ``2 * one_way_delay`` later.  The rover sits still in
between, then drives ``earth_drive_distance`` along the returned arc.
Localization and the reactive layer stay on board in both modes.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import MissionConfig
from .defaults import MAX_SPEED_M_PER_H
from .errors import InsufficientDataError, DegenerateGeometryError, ParameterError
from .geometry import sinc_half, wrap_angle
from .localization import (Pose, PoseEstimate, RelativeTransform, dead_reckon_step, fuse_pose,
                           visual_odometry)
from .planning import (HazardKind, HazardResponse, generate_candidate_arcs,
                       plan_waypoints, reactive_check, select_path)
from .sensing import (BodyMotion, SensorRngs, capture_point_cloud, sample_imu_window,
                      sample_star_fix, sample_wheel_odometry)
from .terrain import TerrainModel, generate_terrain
from .traversability import CellState, TraversabilityMap, oracle_assessment, update_map

# wheel travel below this is too short for a meaningful slip ratio
MIN_SLIP_CHECK_DISTANCE = 0.02
# target-distance decrease that counts as progress for the loop monitor
PROGRESS_STEP = 0.25
# heading change without progress that triggers the escape mode
LOOP_TURN = math.pi
# dynamics integration step along the arc
SUBSTEP = 0.05


@dataclass(frozen=True)
class DriveState:
    kind: str = "idle"  # idle | driving | stopped
    curvature: Optional[float] = None
    progress: float = 0.0  # wheel travel along the current arc
    reason: Optional[str] = None


@dataclass(frozen=True)
class RoverState:
    true_pose: Pose
    estimate: PoseEstimate
    drive: DriveState = DriveState()
    clock: float = 0.0
    odometer: float = 0.0  # true ground travel
    encoder: float = 0.0  # wheel travel


@dataclass(frozen=True)
class TelemetryRecord:
    time: float
    true_pose: Pose
    estimate: Pose
    position_error: float
    curvature: Optional[float]
    hazard: str
    hazard_reason: Optional[str]
    coverage: float
    phase: str

    def as_row(self):
        t, e = self.true_pose, self.estimate
        return [self.time, t.x, t.y, t.z, t.heading, t.roll, t.pitch, e.x, e.y, e.heading,
                self.position_error,
                float("nan") if self.curvature is None else float(self.curvature),
                self.hazard, self.hazard_reason or "", self.coverage, self.phase]


@dataclass(frozen=True)
class MissionReport:
    outcome: str  # reached | timed_out | emergency_stopped
    elapsed: float
    distance: float
    average_speed: float  # m/h
    hazard_cell_entries: int
    final_position_error: float
    cycles: int = 0
    localization_updates: int = 0
    replans: int = 0
    emergency_reason: Optional[str] = None

    def as_dict(self):
        return dataclasses.asdict(self)

    def summary(self):
        lines = [f"outcome              {self.outcome}"]
        if self.emergency_reason:
            lines.append(f"emergency reason     {self.emergency_reason}")
        lines += [
            f"elapsed              {self.elapsed:.1f} s",
            f"distance             {self.distance:.3f} m",
            f"average speed        {self.average_speed:.2f} m/h",
            f"hazard-cell entries  {self.hazard_cell_entries}",
            f"final position error {self.final_position_error:.4f} m",
            f"control cycles       {self.cycles}",
            f"localization updates {self.localization_updates}",
            f"replans              {self.replans}",
        ]
        return "\n".join(lines)


@dataclass
class MissionResult:
    report: MissionReport
    telemetry: List[TelemetryRecord]
    map: TraversabilityMap
    final_state: RoverState
    terrain: TerrainModel


# -- kinematics ---------------------------------------------------------------

# wheel-contact footprint: centre plus a ring, radius in metres
FOOTPRINT_RADIUS = 0.5
_RING = np.array([[0.0, 0.0]] + [[math.cos(a), math.sin(a)] for a in np.arange(8) * math.pi / 4])


def footprint_contact(terrain, x: float, y: float):
    """(z, slope_x, slope_y, slip) of the rover resting on the terrain.

    The slopes come from the least-squares plane through the ground under
    the footprint ring, which is what an inclinometer on a six-wheeled body
    reads; ``z`` and ``slip`` are taken under the centre.
    """
    px = x + FOOTPRINT_RADIUS * _RING[:, 0]
    py = y + FOOTPRINT_RADIUS * _RING[:, 1]
    h, _, _, slip = terrain.contact(px, py)
    # the ring is symmetric about the centre, so the normal equations decouple
    dx = px - x
    dy = py - y
    a = float(dx @ h / (dx @ dx))
    b = float(dy @ h / (dy @ dy))
    return float(h[0]), a, b, float(slip[0])


def _seat(x, y, heading, h, gx, gy) -> Pose:
    c, s = math.cos(heading), math.sin(heading)
    return Pose(x, y, heading, math.atan(-gx * s + gy * c), math.atan(gx * c + gy * s), h)


def contact_pose(terrain, x: float, y: float, heading: float) -> Pose:
    """Pose resting on the ground: z under the centre, attitude from the footprint plane.

    Pitch is the nose-up slope along the heading, roll the slope towards the
    rover's left.
    """
    h, gx, gy, _ = footprint_contact(terrain, x, y)
    return _seat(x, y, heading, h, gx, gy)


def true_tilt(terrain, pose: Pose) -> float:
    """Inclinometer tilt: angle of the footprint plane from horizontal."""
    _, gx, gy, _ = footprint_contact(terrain, pose.x, pose.y)
    return float(math.atan(math.hypot(gx, gy)))


def step_dynamics(state: RoverState, arc, dt: float, terrain, speed: float = MAX_SPEED_M_PER_H,
                  max_length: Optional[float] = None) -> RoverState:
    """Drive the true rover along ``arc`` for ``dt`` seconds at ``speed`` m/h.

    ``arc`` is a CandidateArc or a bare curvature.  Wheels turn through
    ``speed * dt`` (capped by ``max_length``); the ground moves by that times
    ``1 - slip`` sampled along the way, and heading turns by curvature times
    ground travel.  The rover is re-seated on the terrain after every sub-step.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    if not 0 <= speed:
        raise ParameterError(f"speed must be >= 0, got {speed}")
    kappa = float(getattr(arc, "curvature", arc))
    wheel = speed * dt / 3600.0
    if max_length is not None:
        wheel = max(0.0, min(wheel, max_length))
    p = state.true_pose
    x, y, heading = p.x, p.y, p.heading
    pose = p
    ground_total = 0.0
    n = int(math.ceil(wheel / SUBSTEP - 1e-12)) if wheel > 0 else 0
    h, gx, gy, slip = footprint_contact(terrain, x, y)
    for _ in range(n):
        ds = wheel / n
        ground = ds * (1.0 - slip)
        dh = kappa * ground
        pitch = math.atan(gx * math.cos(heading) + gy * math.sin(heading))
        horiz = ground * sinc_half(dh) * math.cos(pitch)
        mid = heading + 0.5 * dh
        x += horiz * math.cos(mid)
        y += horiz * math.sin(mid)
        heading += dh
        ground_total += ground
        h, gx, gy, slip = footprint_contact(terrain, x, y)
    if n:
        pose = _seat(x, y, heading, h, gx, gy)
    progress = state.drive.progress + wheel if state.drive.curvature == kappa else wheel
    return replace(state, true_pose=pose, clock=state.clock + dt,
                   odometer=state.odometer + ground_total, encoder=state.encoder + wheel,
                   drive=DriveState("driving" if wheel > 0 else "idle", kappa, progress))


def turn_in_place(state: RoverState, angle: float, dt: float, terrain) -> RoverState:
    p = state.true_pose
    pose = contact_pose(terrain, p.x, p.y, p.heading + angle)
    return replace(state, true_pose=pose, clock=state.clock + dt,
                   drive=DriveState("driving", None, 0.0))


# -- map rendering --------------------------------------------------------------

def render_map_snapshot(tmap: TraversabilityMap) -> np.ndarray:
    """One uint8 pixel per map cell.

    Row 0 is the northern edge (largest y), column 0 the western edge
    (smallest x).  Unknown cells are 128, impassable cells 0, assessed cells
    ``rint(255 * safety)`` with numpy's round-half-to-even, so 0.5 maps to 128.
    """
    state, safety = tmap.grid()
    img = np.full(state.shape, 128, dtype=np.uint8)
    ok = state == CellState.ASSESSED
    img[ok] = np.rint(np.clip(safety[ok], 0.0, 1.0) * 255.0).astype(np.uint8)
    img[state == CellState.IMPASSABLE] = 0
    # grid is [x, y]; image is [north->south, west->east]
    return np.ascontiguousarray(img.T[::-1])


# -- mission loop -----------------------------------------------------------------

def _mission_terrain(cfg: MissionConfig) -> TerrainModel:
    r = cfg.clear_radius
    keep = tuple(cfg.terrain.keepout) + ((cfg.start[0], cfg.start[1], r),) + tuple(
        (g[0], g[1], r) for g in cfg.goals)
    return generate_terrain(cfg.seed, replace(cfg.terrain, keepout=keep))


def _route(cfg: MissionConfig):
    """(x, y, is_goal) points: planned waypoints with the goals themselves flagged."""
    pts = []
    prev = cfg.start[:2]
    for g in cfg.goals:
        wps = plan_waypoints(prev, g, cfg.planner)
        pts += [(w[0], w[1], False) for w in wps[:-1]]
        pts.append((float(g[0]), float(g[1]), True))
        prev = g
    return pts


def _next_window(abs_time: float, cfg: MissionConfig) -> float:
    period = cfg.comm.sol_length / cfg.comm.windows_per_sol
    return math.ceil(abs_time / period - 1e-12) * period


class _Mission:
    def __init__(self, cfg: MissionConfig, terrain: Optional[TerrainModel] = None):
        self.cfg = cfg
        self.terrain = terrain if terrain is not None else _mission_terrain(cfg)
        self.rngs = SensorRngs.from_seed(cfg.seed)
        self.arcs = generate_candidate_arcs(cfg.planner)
        self.map = TraversabilityMap(cfg.traversability)
        sx, sy, sh = cfg.start
        pose = contact_pose(self.terrain, sx, sy, sh)
        self.state = RoverState(pose, PoseEstimate(pose))
        self.route = _route(cfg)
        self.route_k = 0
        self.leg_start = (sx, sy)
        self.telemetry: List[TelemetryRecord] = []
        self.t0_abs = cfg.start_time_of_day * cfg.comm.sol_length
        self.oracle_cache: Dict[Tuple[int, int], int] = {}
        self.hazard_entries = 0
        self.loc_updates = 0
        self.replans = 0
        self.exclude: Tuple[float, ...] = ()
        # loop monitor: heading turned since the target distance last improved
        self.best_target_dist = math.inf
        self.turn_since_progress = 0.0
        self.escape_left = 0.0
        self.escape_planner = replace(cfg.planner, safety_weight=cfg.escape_safety_weight,
                                      efficiency_weight=1.0 - cfg.escape_safety_weight)
        self.cloud = None
        self.cloud_pose = None
        self.tilt = None
        self.keyframe = None  # (cloud, estimate, encoder reading)
        self.last_loc = -math.inf
        self.drive_since_loc = 0.0
        # earth-in-the-loop bookkeeping
        self.pending = None  # (ready clock, [(cloud, estimate)])
        self.earth_arc: Optional[float] = None
        self.earth_remaining = 0.0
        self.earth_turn = 0.0

    # sensing -----------------------------------------------------------------
    def _sense(self):
        tp = self.state.true_pose
        if self.cloud_pose != (tp.x, tp.y, tp.heading):
            self.cloud = capture_point_cloud(self.terrain, tp, self.cfg.hazcam, self.rngs.hazcam,
                                             self.state.clock)
            self.cloud_pose = (tp.x, tp.y, tp.heading)
            return True
        return False

    def _panorama(self):
        clouds = []
        tp = self.state.true_pose
        for k in range(8):
            cam = replace(self.cfg.navcam, mount_yaw=k * math.pi / 4)
            clouds.append(capture_point_cloud(self.terrain, tp, cam, self.rngs.navcam,
                                              self.state.clock))
        return clouds

    # localization ------------------------------------------------------------
    def _localize(self):
        """Budget-gated VO + star fusion; returns the slip check inputs or None."""
        cfg = self.cfg
        st = self.state
        if st.clock - self.last_loc < cfg.compute_budget - 1e-9:
            return None
        result = None
        est = st.estimate
        if self.keyframe is not None:
            kcloud, kest, kenc = self.keyframe
            if kcloud is self.cloud:
                # same frame as the keyframe: the rover has not moved
                vo = RelativeTransform(0.0, (0.0, 0.0, 0.0), 0.0, len(kcloud))
            else:
                try:
                    vo = visual_odometry(kcloud, self.cloud)
                except (InsufficientDataError, DegenerateGeometryError):
                    vo = None
            star = sample_star_fix(st.true_pose.heading, self.t0_abs + st.clock,
                                   cfg.star_tracker, self.rngs.star)
            est = fuse_pose(est, vo, star, cfg.fusion, anchor=kest if vo is not None else None)
            if vo is not None:
                result = (st.encoder - kenc, vo.distance)
            self.loc_updates += 1
        self.state = replace(st, estimate=est)
        self.keyframe = (self.cloud, est, st.encoder)
        self.last_loc = st.clock
        self.drive_since_loc = 0.0
        return result

    def _dead_reckon(self, before: RoverState, dt: float):
        after = self.state
        cfg = self.cfg
        yaw_rate = wrap_angle(after.true_pose.heading - before.true_pose.heading) / dt
        imu = sample_imu_window(BodyMotion(yaw_rate), dt, cfg.imu, self.rngs.imu, after.clock)
        wheel = after.encoder - before.encoder
        odom = None
        if wheel > 0:
            odom, _ = sample_wheel_odometry(wheel, 0.0, after.drive.curvature or 0.0,
                                            self.rngs.odometry, after.clock)
        tp = before.true_pose
        est = before.estimate
        # attitude comes straight from the inclinometer
        est = replace(est, mean=replace(est.mean, roll=tp.roll, pitch=tp.pitch))
        est = dead_reckon_step(est, imu, odom, dt, cfg.dead_reckoning)
        ap = after.true_pose
        est = replace(est, mean=replace(est.mean, roll=ap.roll, pitch=ap.pitch))
        self.state = replace(after, estimate=est)

    # waypoints -----------------------------------------------------------------
    def _current_target(self):
        cfg = self.cfg
        e = self.state.estimate.mean
        while self.route_k < len(self.route):
            wx, wy, is_goal = self.route[self.route_k]
            d = math.hypot(wx - e.x, wy - e.y)
            tol = cfg.goal_tolerance if is_goal else cfg.waypoint_tolerance
            advance = d <= tol
            if not is_goal and not advance:
                ux, uy = wx - self.leg_start[0], wy - self.leg_start[1]
                passed = (e.x - wx) * ux + (e.y - wy) * uy > 0.0
                i, j = self.map.cell_of(wx, wy)
                blocked = self.map.lookup(i, j)[0] == CellState.IMPASSABLE
                advance = passed or bool(blocked)
            if not advance:
                return wx, wy
            self.leg_start = (wx, wy)
            self.route_k += 1
            self.best_target_dist = math.inf
            self.turn_since_progress = 0.0
        return None

    def _select(self):
        target = self._current_target()
        if target is None:
            return None, None
        e = self.state.estimate.mean
        d = math.hypot(target[0] - e.x, target[1] - e.y)
        if d < self.best_target_dist - PROGRESS_STEP:
            self.best_target_dist = d
            self.turn_since_progress = 0.0
        elif self.turn_since_progress > LOOP_TURN and self.escape_left <= 0.0:
            # turning on the spot without getting closer: the greedy choice is looping
            self.escape_left = self.cfg.escape_distance
            self.turn_since_progress = 0.0
            self.best_target_dist = d
        planner = self.escape_planner if self.escape_left > 0.0 else self.cfg.planner
        wb = wrap_angle(math.atan2(target[1] - e.y, target[0] - e.x) - e.heading)
        arc, _ = select_path(self.arcs, self.map, wb, planner, e, self.exclude)
        self.exclude = ()
        return arc, wb

    # bookkeeping ---------------------------------------------------------------
    def _oracle_impassable(self, pose: Pose) -> bool:
        i, j = self.map.cell_of(pose.x, pose.y)
        key = (int(i), int(j))
        if key not in self.oracle_cache:
            a = oracle_assessment(self.terrain, key[0], key[1], self.cfg.traversability)
            self.oracle_cache[key] = int(a.state)
        return self.oracle_cache[key] == CellState.IMPASSABLE

    def _record(self, t, curvature, hazard: HazardResponse, phase, st=None):
        """One row: the state at the start of the cycle and the decision taken."""
        st = self.state if st is None else st
        e = st.estimate.mean
        tp = st.true_pose
        self.telemetry.append(TelemetryRecord(
            t, tp, e, float(math.hypot(tp.x - e.x, tp.y - e.y)), curvature,
            hazard.kind.value, hazard.reason.value if hazard.reason else None,
            self.map.coverage(), phase))

    def _goal_reached(self):
        return self._current_target() is None

    # main loop -------------------------------------------------------------------
    def run(self) -> MissionResult:
        cfg = self.cfg
        dt = cfg.control_dt
        outcome = "timed_out"
        emergency_reason = None
        self._sense()
        initial = [(c, self.state.estimate) for c in self._panorama()] if cfg.panorama else []
        if cfg.mode == "onboard":
            for c, est in initial:
                update_map(self.map, c, est)
        else:
            self.pending = None
            self._earth_request(extra=initial)
        cycles = 0
        while True:
            t = self.state.clock
            if self._goal_reached():
                outcome = "reached"
                self._record(t, None, HazardResponse(), "reached")
                break
            if t >= cfg.max_sim_time:
                self._record(t, None, HazardResponse(), "timeout")
                break
            cycles += 1
            if self._oracle_impassable(self.state.true_pose):
                self.hazard_entries += 1
            new_cloud = self._sense()
            slip_obs = self._localize()
            if cfg.mode == "onboard" and new_cloud:
                update_map(self.map, self.cloud, self.state.estimate)
            sensor_ok = cfg.sensor_fault_time is None or t < cfg.sensor_fault_time
            wheel_step, vo_step = slip_obs if slip_obs else (0.0, None)
            if wheel_step < MIN_SLIP_CHECK_DISTANCE:
                wheel_step, vo_step = 0.0, None
            if new_cloud or self.tilt is None:
                self.tilt = true_tilt(self.terrain, self.state.true_pose)
            hazard = reactive_check(self.tilt, wheel_step,
                                    vo_step, sensor_ok, cfg.planner)
            if hazard.kind == HazardKind.EMERGENCY_STOP:
                outcome = "emergency_stopped"
                emergency_reason = hazard.reason.value
                self.state = replace(self.state, drive=DriveState("stopped", None, 0.0,
                                                                  hazard.reason.value))
                self._record(t, None, hazard, "emergency_stop")
                break
            before = self.state
            if hazard.kind == HazardKind.STOP_AND_REPLAN:
                self.replans += 1
                if before.drive.curvature is not None:
                    self.exclude = (before.drive.curvature,)
                self.state = replace(before, clock=t + dt,
                                     drive=DriveState("stopped", None, 0.0, hazard.reason.value))
                if cfg.mode == "earth_in_loop":
                    self.earth_remaining = 0.0
                    self.earth_turn = 0.0
                curvature, phase = None, "replan"
            elif cfg.mode == "onboard":
                curvature, phase = self._onboard_drive(dt)
            else:
                curvature, phase = self._earth_drive(dt)
            self._dead_reckon(before, dt)
            turned = abs(wrap_angle(self.state.true_pose.heading - before.true_pose.heading))
            self.turn_since_progress += turned
            if self.escape_left > 0.0:
                self.escape_left -= self.state.encoder - before.encoder
            self._record(t, curvature, hazard, phase, before)
        st = self.state
        e = st.estimate.mean
        elapsed = st.clock
        speed = st.odometer / elapsed * 3600.0 if elapsed > 0 else 0.0
        report = MissionReport(outcome, elapsed, st.odometer, speed, self.hazard_entries,
                               float(math.hypot(st.true_pose.x - e.x, st.true_pose.y - e.y)),
                               cycles, self.loc_updates, self.replans, emergency_reason)
        return MissionResult(report, self.telemetry, self.map, st, self.terrain)

    def _onboard_drive(self, dt):
        cfg = self.cfg
        allowed = cfg.max_drive_per_update - self.drive_since_loc
        if allowed <= 1e-12:
            self.state = replace(self.state, clock=self.state.clock + dt,
                                 drive=DriveState("idle"))
            return None, "halt_budget"
        arc, wb = self._select()
        if arc is None:
            if wb is None:
                self.state = replace(self.state, clock=self.state.clock + dt)
                return None, "reached"
            angle = math.copysign(cfg.turn_rate * dt, wb)
            self.state = turn_in_place(self.state, angle, dt, self.terrain)
            return None, "turn"
        enc0 = self.state.encoder
        self.state = step_dynamics(self.state, arc, dt, self.terrain, cfg.max_speed, allowed)
        self.drive_since_loc += self.state.encoder - enc0
        return arc.curvature, "drive"

    # earth-in-the-loop -----------------------------------------------------------
    def _earth_request(self, extra=()):
        clouds = list(extra)
        if self.cloud is not None and len(self.cloud):
            clouds.append((self.cloud, self.state.estimate))
        uplink = _next_window(self.t0_abs + self.state.clock, self.cfg)
        ready = uplink - self.t0_abs + 2.0 * self.cfg.comm.one_way_delay
        self.pending = (ready, clouds)

    def _earth_drive(self, dt):
        cfg = self.cfg
        st = self.state
        if self.earth_turn != 0.0:
            step = math.copysign(min(abs(self.earth_turn), cfg.turn_rate * dt), self.earth_turn)
            self.earth_turn -= step
            self.state = turn_in_place(st, step, dt, self.terrain)
            if abs(self.earth_turn) < 1e-12:
                self.earth_turn = 0.0
                self._earth_request()
            return None, "turn"
        if self.earth_remaining > 1e-12:
            allowed = min(self.earth_remaining, cfg.max_drive_per_update - self.drive_since_loc)
            if allowed <= 1e-12:
                self.state = replace(st, clock=st.clock + dt, drive=DriveState("idle"))
                return None, "halt_budget"
            enc0 = st.encoder
            self.state = step_dynamics(st, self.earth_arc, dt, self.terrain, cfg.max_speed, allowed)
            moved = self.state.encoder - enc0
            self.drive_since_loc += moved
            self.earth_remaining -= moved
            if self.earth_remaining <= 1e-12:
                self.earth_remaining = 0.0
            return self.earth_arc, "drive"
        if self.pending is None:
            self._earth_request()
        ready, clouds = self.pending
        if st.clock < ready:
            self.state = replace(st, clock=st.clock + dt, drive=DriveState("idle"))
            return None, "wait_earth"
        # products have arrived: fold them in and pick an arc
        for c, est in clouds:
            update_map(self.map, c, est)
        self.pending = None
        arc, wb = self._select()
        if arc is None:
            if wb is None:
                self.state = replace(st, clock=st.clock + dt)
                return None, "reached"
            self.earth_turn = math.copysign(math.pi / 4, wb)
            self.state = replace(st, clock=st.clock + dt)
            return None, "wait_earth"
        self.earth_arc = arc.curvature
        self.earth_remaining = min(cfg.earth_drive_distance, arc.length)
        self.state = replace(st, clock=st.clock + dt)
        return arc.curvature, "wait_earth"


def run_mission(cfg: MissionConfig, terrain: Optional[TerrainModel] = None) -> MissionResult:
    """Run one traverse; deterministic in ``cfg`` (seed included)."""
    if not isinstance(cfg, MissionConfig):
        raise ParameterError("run_mission needs a MissionConfig")
    return _Mission(cfg, terrain).run()
