"""Local path selection over constant-curvature arcs, waypoints, reactive hazards."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParameterError
from .geometry import unique_cells, wrap_angle
from .traversability import CellState


@dataclass(frozen=True)
class PlannerConfig:
    arc_count: int = 15
    max_curvature: float = 1.0
    arc_length: float = 3.0
    sample_spacing: float = 0.25
    safety_weight: float = 0.7
    efficiency_weight: float = 0.3
    waypoint_spacing: float = 5.0
    slip_discrepancy_limit: float = 0.3
    emergency_tilt: float = math.radians(30.0)
    # cells within this distance of a sample pose count as traversed
    swept_radius: float = 0.25
    # safety given to unknown cells; 0 disqualifies the path
    unknown_index: float = 0.0
    safety_aggregation: str = "min"

    def __post_init__(self):
        if self.arc_count < 1 or self.arc_count % 2 == 0:
            raise ParameterError(f"arc_count must be a positive odd integer, got {self.arc_count}")
        if self.max_curvature < 0:
            raise ParameterError("max_curvature must be >= 0")
        if not self.arc_length > 0 or not self.sample_spacing > 0:
            raise ParameterError("arc_length and sample_spacing must be > 0")
        if self.safety_weight < 0 or self.efficiency_weight < 0:
            raise ParameterError("weights must be >= 0")
        if self.safety_weight == 0 and self.efficiency_weight == 0:
            raise ParameterError("safety_weight and efficiency_weight cannot both be 0")
        if not self.waypoint_spacing > 0:
            raise ParameterError("waypoint_spacing must be > 0")
        if not 0.0 <= self.unknown_index < 1.0:
            raise ParameterError("unknown_index must be in [0, 1)")
        if self.safety_aggregation not in ("min", "mean"):
            raise ParameterError("safety_aggregation must be 'min' or 'mean'")
        if self.swept_radius < 0:
            raise ParameterError("swept_radius must be >= 0")


@dataclass(frozen=True)
class CandidateArc:
    curvature: float
    length: float
    # (K, 3) rows of (x, y, heading) in the rover frame, s = spacing .. length
    sample_poses: np.ndarray

    @property
    def endpoint(self):
        return self.sample_poses[-1]


@dataclass(frozen=True)
class PathScore:
    safety: float
    efficiency: float
    combined: float
    disqualified: bool


class HazardKind(str, Enum):
    NONE = "none"
    STOP_AND_REPLAN = "stop_and_replan"
    EMERGENCY_STOP = "emergency_stop"


class HazardReason(str, Enum):
    TILT = "tilt"
    SLIP_DISCREPANCY = "slip_discrepancy"
    SENSOR_ABNORMAL = "sensor_abnormal"


@dataclass(frozen=True)
class HazardResponse:
    kind: HazardKind = HazardKind.NONE
    reason: Optional[HazardReason] = None
    slip_estimate: Optional[float] = None


def arc_poses(curvature: float, s) -> np.ndarray:
    """Poses at arc lengths ``s`` along a constant-curvature arc from the origin."""
    s = np.asarray(s, dtype=float)
    if abs(curvature) < 1e-12:
        return np.column_stack([s, np.zeros_like(s), np.zeros_like(s)])
    a = curvature * s
    return np.column_stack([np.sin(a) / curvature, (1.0 - np.cos(a)) / curvature, wrap_angle(a)])


def make_arc(curvature: float, length: float, spacing: float) -> CandidateArc:
    if not length > 0:
        raise ParameterError("arc length must be > 0")
    n = max(1, int(math.ceil(length / spacing - 1e-9)))
    s = np.minimum(np.arange(1, n + 1) * spacing, length)
    return CandidateArc(float(curvature), float(length), arc_poses(curvature, s))


def generate_candidate_arcs(cfg: PlannerConfig = PlannerConfig()) -> List[CandidateArc]:
    """``arc_count`` evenly spaced curvatures in [-max, +max]; the middle one is 0."""
    n = cfg.arc_count
    if n == 1:
        ks = [0.0]
    else:
        ks = np.linspace(-cfg.max_curvature, cfg.max_curvature, n).tolist()
        ks[n // 2] = 0.0
    return [make_arc(k, cfg.arc_length, cfg.sample_spacing) for k in ks]


def _swept_offsets(radius, cell_size):
    k = int(math.ceil(radius / cell_size)) + 1
    di, dj = np.meshgrid(np.arange(-k, k + 1), np.arange(-k, k + 1), indexing="ij")
    return di.ravel(), dj.ravel()


def _world_samples(sample_poses, pose):
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    sx, sy = sample_poses[..., 0], sample_poses[..., 1]
    return pose.x + c * sx - s * sy, pose.y + s * sx + c * sy


def _swept(wx, wy, tmap, cfg):
    """Candidate cells (..., O) around each sample and whether each is within reach."""
    cs = tmap.cfg.cell_size
    pi, pj = tmap.cell_of(wx, wy)
    if cfg.swept_radius <= 0:
        return pi[..., None], pj[..., None], np.ones(pi.shape + (1,), dtype=bool)
    di, dj = _swept_offsets(cfg.swept_radius, cs)
    ci = pi[..., None] + di
    cj = pj[..., None] + dj
    near = np.hypot(ci * cs - wx[..., None], cj * cs - wy[..., None]) <= cfg.swept_radius
    # the cell containing each sample is always traversed
    near |= (di == 0) & (dj == 0)
    return ci, cj, near


def touched_cells(arc: CandidateArc, tmap, pose, cfg: PlannerConfig) -> np.ndarray:
    """Unique world cells (M, 2) within ``swept_radius`` of the arc's sample poses."""
    wx, wy = _world_samples(arc.sample_poses, pose)
    ci, cj, near = _swept(wx, wy, tmap, cfg)
    return unique_cells(ci[near], cj[near])


def _cell_index(state, safety, cfg):
    idx = np.where(state == CellState.UNKNOWN, cfg.unknown_index, safety)
    return np.where(state == CellState.IMPASSABLE, 0.0, idx)


def _aggregate(idx, cfg):
    if len(idx) == 0:
        return cfg.unknown_index
    if cfg.safety_aggregation == "min" or np.any(idx <= 0.0):
        return float(idx.min())
    return float(idx.mean())


def _arc_safety(arcs, tmap, pose, cfg: PlannerConfig) -> np.ndarray:
    """Aggregated safety of every arc.

    For ``min`` aggregation repeated cells cannot change the answer, so all
    arcs are evaluated in one vectorized lookup.
    """
    lengths = {len(a.sample_poses) for a in arcs}
    if cfg.safety_aggregation != "min" or len(lengths) != 1:
        out = []
        for a in arcs:
            cells = touched_cells(a, tmap, pose, cfg)
            out.append(_aggregate(_cell_index(*tmap.lookup(cells[:, 0], cells[:, 1]), cfg), cfg))
        return np.array(out)
    sp = np.stack([a.sample_poses for a in arcs])  # (A, K, 3)
    wx, wy = _world_samples(sp, pose)
    ci, cj, near = _swept(wx, wy, tmap, cfg)
    idx = _cell_index(*tmap.lookup(ci, cj), cfg)
    idx = np.where(near, idx, np.inf)
    return idx.reshape(len(arcs), -1).min(axis=1)


def _score(arc, agg, waypoint_bearing, cfg):
    end = arc.endpoint
    bearing = math.atan2(end[1], end[0])
    efficiency = 1.0 - abs(wrap_angle(bearing - waypoint_bearing)) / math.pi
    disq = agg <= 0.0
    combined = 0.0 if disq else cfg.safety_weight * agg + cfg.efficiency_weight * efficiency
    return PathScore(0.0 if disq else float(agg), efficiency, combined, bool(disq))


def score_path(arc: CandidateArc, tmap, waypoint_bearing: float,
               cfg: PlannerConfig, pose) -> PathScore:
    """Safety from the traversed cells, efficiency from bearing deviation.

    ``pose`` (x, y, heading) places the rover-frame arc on the map;
    ``waypoint_bearing`` is relative to the rover heading.
    """
    cells = touched_cells(arc, tmap, pose, cfg)
    agg = _aggregate(_cell_index(*tmap.lookup(cells[:, 0], cells[:, 1]), cfg), cfg)
    return _score(arc, agg, waypoint_bearing, cfg)


def _rank_key(arc, score):
    # larger combined first, then smaller |curvature|, then positive curvature
    return (-score.combined, abs(arc.curvature), 0 if arc.curvature > 0 else 1)


def select_path(candidates: Sequence[CandidateArc], tmap, waypoint_bearing: float,
                cfg: PlannerConfig, pose, exclude: Sequence[float] = ()
                ) -> Tuple[Optional[CandidateArc], List[PathScore]]:
    """Best qualified arc (or None) and the score of every candidate.

    Curvatures listed in ``exclude`` are scored but never selected.
    """
    if not candidates:
        raise ParameterError("no candidate arcs")
    aggs = _arc_safety(candidates, tmap, pose, cfg)
    scores = [_score(a, g, waypoint_bearing, cfg) for a, g in zip(candidates, aggs)]
    best = None
    best_key = None
    for arc, sc in zip(candidates, scores):
        if sc.disqualified or arc.curvature in exclude:
            continue
        key = _rank_key(arc, sc)
        if best_key is None or key < best_key:
            best, best_key = arc, key
    return best, scores


def plan_waypoints(current, goal, cfg: PlannerConfig = PlannerConfig()) -> List[Tuple[float, float]]:
    """Points every ``waypoint_spacing`` along the segment, ending exactly at ``goal``."""
    cx, cy = float(current[0]), float(current[1])
    gx, gy = float(goal[0]), float(goal[1])
    d = math.hypot(gx - cx, gy - cy)
    if d == 0.0:
        return []
    n = int(math.ceil(d / cfg.waypoint_spacing - 1e-12))
    ux, uy = (gx - cx) / d, (gy - cy) / d
    pts = [(cx + ux * cfg.waypoint_spacing * k, cy + uy * cfg.waypoint_spacing * k)
           for k in range(1, n)]
    pts.append((gx, gy))
    return pts


def reactive_check(current_tilt: float, wheel_step: float, vo_step: Optional[float],
                   sensor_ok: bool, cfg: PlannerConfig = PlannerConfig()) -> HazardResponse:
    """Last-line checks: tilt and sensor faults stop at once; slip forces a replan."""
    slip = None
    if vo_step is not None and wheel_step > 0:
        slip = 1.0 - vo_step / wheel_step
    if not sensor_ok:
        return HazardResponse(HazardKind.EMERGENCY_STOP, HazardReason.SENSOR_ABNORMAL, slip)
    if current_tilt > cfg.emergency_tilt:
        return HazardResponse(HazardKind.EMERGENCY_STOP, HazardReason.TILT, slip)
    if slip is not None and slip > cfg.slip_discrepancy_limit:
        return HazardResponse(HazardKind.STOP_AND_REPLAN, HazardReason.SLIP_DISCREPANCY, slip)
    return HazardResponse(HazardKind.NONE, None, slip)
