"""Rover-centred rolling traversability grid with per-cell plane fitting.

Cells are indexed by integer world coordinates ``(i, j)``; cell ``(i, j)``
is centred at ``(i * cell_size, j * cell_size)``.  Storage is a torus of
``(2R+1)^2`` slots addressed by ``(i mod N, j mod N)``, so recentring only
clears the slots that scroll out; nothing is copied.

Each cell is assessed from every stored point within ``rover_plane_radius``
of its centre (a rover-sized plane), so neighbouring cells share evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Tuple

import numpy as np

from .errors import DegenerateGeometryError, InsufficientDataError, ParameterError
from .geometry import unique_cells


class CellState(IntEnum):
    UNKNOWN = 0
    ASSESSED = 1
    IMPASSABLE = 2


@dataclass(frozen=True)
class TraversabilityConfig:
    cell_size: float = 0.25
    map_radius: int = 40
    rover_plane_radius: float = 0.5
    min_points_per_fit: int = 20
    max_tilt: float = math.radians(20.0)
    max_roughness: float = 0.05
    clearance: float = 0.30
    # ring buffer per cell; the 0.1 m sensing lattice puts at most 9 points in a 0.25 m cell
    max_points_per_cell: int = 12

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ParameterError("cell_size must be > 0")
        if self.map_radius < 1:
            raise ParameterError("map_radius must be >= 1")
        if self.rover_plane_radius < self.cell_size:
            raise ParameterError("rover_plane_radius must be >= cell_size")
        if self.min_points_per_fit < 3:
            raise ParameterError("min_points_per_fit must be >= 3")
        for name in ("max_tilt", "max_roughness", "clearance"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")
        if self.max_points_per_cell < 1:
            raise ParameterError("max_points_per_cell must be >= 1")


@dataclass(frozen=True)
class PlaneFit:
    """Least-squares plane ``z = a*x + b*y + c``; ``normal . p = offset``."""

    normal: Tuple[float, float, float]
    offset: float
    tilt: float
    residual_rms: float
    max_deviation: float
    point_count: int
    coefficients: Tuple[float, float, float]


@dataclass(frozen=True)
class CellAssessment:
    state: CellState
    tilt: Optional[float] = None
    roughness: Optional[float] = None
    max_deviation: Optional[float] = None
    safety_index: Optional[float] = None


UNKNOWN_CELL = CellAssessment(CellState.UNKNOWN)


def fit_cell_plane(points, min_points: int = 3) -> PlaneFit:
    """Vertical-residual least-squares plane through ``points`` (N, 3)."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(p)
    if n < max(3, min_points):
        raise InsufficientDataError(f"{n} points, need at least {max(3, min_points)}")
    mean = p.mean(axis=0)
    q = p - mean
    sxx = q[:, 0] @ q[:, 0]
    sxy = q[:, 0] @ q[:, 1]
    syy = q[:, 1] @ q[:, 1]
    sxz = q[:, 0] @ q[:, 2]
    syz = q[:, 1] @ q[:, 2]
    det = sxx * syy - sxy * sxy
    if not det > 1e-12 * (sxx + syy) ** 2:
        raise DegenerateGeometryError("points do not span the ground plane")
    a = (syy * sxz - sxy * syz) / det
    b = (sxx * syz - sxy * sxz) / det
    c = mean[2] - a * mean[0] - b * mean[1]
    res = q[:, 2] - a * q[:, 0] - b * q[:, 1]
    norm = math.sqrt(a * a + b * b + 1.0)
    normal = (-a / norm, -b / norm, 1.0 / norm)
    return PlaneFit(normal, c / norm, math.atan(math.hypot(a, b)),
                    float(np.sqrt(np.mean(res * res))), float(np.max(np.abs(res))), n,
                    (float(a), float(b), float(c)))


def _risk(tilt, roughness, max_dev, cfg):
    return np.maximum(np.maximum(tilt / cfg.max_tilt, roughness / cfg.max_roughness),
                      max_dev / cfg.clearance)


def assess_cell(fit: PlaneFit, cfg: TraversabilityConfig = TraversabilityConfig()) -> CellAssessment:
    """Safety index ``1 - max(tilt/max_tilt, rough/max_rough, dev/clearance)``.

    Any ratio reaching 1 marks the cell impassable with index 0.
    """
    r = float(_risk(fit.tilt, fit.residual_rms, fit.max_deviation, cfg))
    if r >= 1.0:
        return CellAssessment(CellState.IMPASSABLE, fit.tilt, fit.residual_rms, fit.max_deviation, 0.0)
    return CellAssessment(CellState.ASSESSED, fit.tilt, fit.residual_rms, fit.max_deviation, 1.0 - r)


def _fit_batch(x, y, z, m):
    """Plane fits for K point sets at once; arrays are (K, P), ``m`` the mask.

    Returns (ok, tilt, rms, max_dev, count).  Coordinates should be local to
    each set for conditioning.
    """
    w = m.astype(float)
    n = w.sum(axis=1)
    safe_n = np.maximum(n, 1.0)
    mx = (w * x).sum(axis=1) / safe_n
    my = (w * y).sum(axis=1) / safe_n
    mz = (w * z).sum(axis=1) / safe_n
    qx = (x - mx[:, None]) * w
    qy = (y - my[:, None]) * w
    qz = (z - mz[:, None]) * w
    sxx = (qx * qx).sum(axis=1)
    sxy = (qx * qy).sum(axis=1)
    syy = (qy * qy).sum(axis=1)
    sxz = (qx * qz).sum(axis=1)
    syz = (qy * qz).sum(axis=1)
    det = sxx * syy - sxy * sxy
    ok = det > 1e-12 * (sxx + syy) ** 2
    sdet = np.where(ok, det, 1.0)
    a = np.where(ok, (syy * sxz - sxy * syz) / sdet, 0.0)
    b = np.where(ok, (sxx * syz - sxy * sxz) / sdet, 0.0)
    res = (qz - a[:, None] * qx - b[:, None] * qy) * w
    rms = np.sqrt((res * res).sum(axis=1) / safe_n)
    max_dev = np.abs(res).max(axis=1) if res.shape[1] else np.zeros(len(n))
    tilt = np.arctan(np.hypot(a, b))
    return ok, tilt, rms, max_dev, n


class TraversabilityMap:
    """Rolling grid map centred on the rover's cell."""

    def __init__(self, cfg: TraversabilityConfig = TraversabilityConfig()):
        self.cfg = cfg
        R = cfg.map_radius
        N = 2 * R + 1
        S = cfg.max_points_per_cell
        self.size = N
        self.center_cell: Optional[Tuple[int, int]] = None
        self._wi = np.zeros((N, N), dtype=np.int64)
        self._wj = np.zeros((N, N), dtype=np.int64)
        self._pts = np.zeros((N, N, S, 3))
        self._ids = np.zeros((N, N, S), dtype=np.int64)
        self._count = np.zeros((N, N), dtype=np.int64)
        self._next = np.zeros((N, N), dtype=np.int64)
        self._state = np.zeros((N, N), dtype=np.int8)
        self._tilt = np.full((N, N), np.nan)
        self._rough = np.full((N, N), np.nan)
        self._dev = np.full((N, N), np.nan)
        self._safety = np.full((N, N), np.nan)
        self._id_set = set()
        rp = cfg.rover_plane_radius / cfg.cell_size
        k = int(math.ceil(rp + math.sqrt(0.5))) + 1
        di, dj = np.meshgrid(np.arange(-k, k + 1), np.arange(-k, k + 1), indexing="ij")
        di, dj = di.ravel(), dj.ravel()
        # a cell can hold points within R of a centre only if its own centre is within R + half-diagonal
        near = np.hypot(di, dj) <= rp + math.sqrt(0.5)
        self._nbr = (di[near], dj[near])

    # -- geometry -----------------------------------------------------------
    @property
    def center(self):
        """Map centre in metres, snapped to the cell grid."""
        if self.center_cell is None:
            return None
        cs = self.cfg.cell_size
        return (self.center_cell[0] * cs, self.center_cell[1] * cs)

    def cell_of(self, x, y):
        cs = self.cfg.cell_size
        return (np.rint(np.asarray(x) / cs).astype(np.int64),
                np.rint(np.asarray(y) / cs).astype(np.int64))

    def in_window(self, i, j):
        if self.center_cell is None:
            return np.zeros(np.shape(i), dtype=bool)
        R = self.cfg.map_radius
        ci, cj = self.center_cell
        return (np.abs(np.asarray(i) - ci) <= R) & (np.abs(np.asarray(j) - cj) <= R)

    def recenter(self, ci, cj):
        """Scroll so that world cell (ci, cj) is the centre; clear scrolled-out cells."""
        R, N = self.cfg.map_radius, self.size
        si = np.arange(N)
        wi_new = (ci - R) + np.mod(si - (ci - R), N)
        wj_new = (cj - R) + np.mod(si - (cj - R), N)
        WI = np.broadcast_to(wi_new[:, None], (N, N))
        WJ = np.broadcast_to(wj_new[None, :], (N, N))
        if self.center_cell is None:
            stale = np.ones((N, N), dtype=bool)
        else:
            stale = (WI != self._wi) | (WJ != self._wj)
        if stale.any():
            for a, b in zip(*np.nonzero(stale & (self._count > 0))):
                self._id_set.difference_update(self._ids[a, b, : self._count[a, b]].tolist())
            self._count[stale] = 0
            self._next[stale] = 0
            self._state[stale] = CellState.UNKNOWN
            for arr in (self._tilt, self._rough, self._dev, self._safety):
                arr[stale] = np.nan
            self._wi[...] = WI
            self._wj[...] = WJ
        self.center_cell = (int(ci), int(cj))

    # -- queries ------------------------------------------------------------
    def lookup(self, i, j):
        """Vectorized (state, safety_index) for world cells; outside -> unknown."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        inside = self.in_window(i, j)
        si = np.mod(i, self.size)
        sj = np.mod(j, self.size)
        state = np.where(inside, self._state[si, sj], CellState.UNKNOWN).astype(np.int8)
        safety = np.where(inside, self._safety[si, sj], np.nan)
        return state, safety

    def cell(self, i, j) -> CellAssessment:
        if not self.in_window(i, j):
            return UNKNOWN_CELL
        a, b = i % self.size, j % self.size
        st = CellState(int(self._state[a, b]))
        if st == CellState.UNKNOWN:
            return UNKNOWN_CELL
        return CellAssessment(st, float(self._tilt[a, b]), float(self._rough[a, b]),
                              float(self._dev[a, b]), float(self._safety[a, b]))

    def cell_points(self, i, j):
        if not self.in_window(i, j):
            return np.zeros((0, 3))
        a, b = i % self.size, j % self.size
        return self._pts[a, b, : self._count[a, b]].copy()

    def grid(self):
        """(state, safety) arrays indexed [i - ci + R, j - cj + R]."""
        N = self.size
        if self.center_cell is None:
            return np.zeros((N, N), dtype=np.int8), np.full((N, N), np.nan)
        R = self.cfg.map_radius
        ci, cj = self.center_cell
        ii = np.mod(np.arange(ci - R, ci + R + 1), N)
        jj = np.mod(np.arange(cj - R, cj + R + 1), N)
        return self._state[np.ix_(ii, jj)].copy(), self._safety[np.ix_(ii, jj)].copy()

    def coverage(self):
        if self.center_cell is None:
            return 0.0
        return float(np.count_nonzero(self._state) / self._state.size)

    def point_count(self):
        return int(self._count.sum())

    # -- update -------------------------------------------------------------
    def insert_points(self, world_pts, ids):
        """Store new world points; returns the (i, j) cells whose points changed."""
        cfg = self.cfg
        S = cfg.max_points_per_cell
        ci_arr, cj_arr = self.cell_of(world_pts[:, 0], world_pts[:, 1])
        inside = self.in_window(ci_arr, cj_arr)
        id_set = self._id_set
        fresh = [k for k, (fid, ok) in enumerate(zip(ids.tolist(), inside.tolist()))
                 if ok and fid not in id_set]
        if not fresh:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros((0, 3))
        fresh = np.asarray(fresh)
        N = self.size
        pts = world_pts[fresh]
        pid = ids[fresh]
        si = np.mod(ci_arr[fresh], N)
        sj = np.mod(cj_arr[fresh], N)
        for k in range(len(fresh)):
            a, b = si[k], sj[k]
            slot = self._next[a, b] % S
            if self._count[a, b] == S:
                id_set.discard(int(self._ids[a, b, slot]))
            else:
                self._count[a, b] += 1
            self._pts[a, b, slot] = pts[k]
            self._ids[a, b, slot] = pid[k]
            self._next[a, b] = slot + 1
            id_set.add(int(pid[k]))
        return ci_arr[fresh], cj_arr[fresh], pts

    def dirty_cells(self, pts):
        """Cells whose rover-plane disk contains any of ``pts``."""
        cfg = self.cfg
        cs = cfg.cell_size
        pi, pj = self.cell_of(pts[:, 0], pts[:, 1])
        di, dj = self._nbr
        ci = pi[:, None] + di[None, :]
        cj = pj[:, None] + dj[None, :]
        d = np.hypot(ci * cs - pts[:, 0:1], cj * cs - pts[:, 1:2])
        hit = (d <= cfg.rover_plane_radius) & self.in_window(ci, cj)
        if not hit.any():
            return np.zeros((0, 2), dtype=np.int64)
        return unique_cells(ci[hit], cj[hit])

    def reassess(self, cells):
        """Refit and assess the given (K, 2) world cells."""
        if len(cells) == 0:
            return
        cfg = self.cfg
        cs = cfg.cell_size
        N = self.size
        S = cfg.max_points_per_cell
        di, dj = self._nbr
        ni = cells[:, 0:1] + di[None, :]
        nj = cells[:, 1:2] + dj[None, :]
        nbr_ok = self.in_window(ni, nj)
        si = np.mod(ni, N)
        sj = np.mod(nj, N)
        P = self._pts[si, sj]  # (K, O, S, 3)
        cnt = np.where(nbr_ok, self._count[si, sj], 0)
        valid = np.arange(S)[None, None, :] < cnt[..., None]
        K = len(cells)
        x = P[..., 0].reshape(K, -1) - (cells[:, 0] * cs)[:, None]
        y = P[..., 1].reshape(K, -1) - (cells[:, 1] * cs)[:, None]
        z = P[..., 2].reshape(K, -1)
        m = valid.reshape(K, -1) & (x * x + y * y <= cfg.rover_plane_radius ** 2)
        z = np.where(m, z, 0.0)
        zref = z.sum(axis=1) / np.maximum(m.sum(axis=1), 1)
        ok, tilt, rms, dev, n = _fit_batch(x, y, z - zref[:, None], m)
        ok &= n >= cfg.min_points_per_fit
        risk = _risk(tilt, rms, dev, cfg)
        a = np.mod(cells[:, 0], N)
        b = np.mod(cells[:, 1], N)
        state = np.where(~ok, CellState.UNKNOWN,
                         np.where(risk >= 1.0, CellState.IMPASSABLE, CellState.ASSESSED))
        self._state[a, b] = state
        self._tilt[a, b] = np.where(ok, tilt, np.nan)
        self._rough[a, b] = np.where(ok, rms, np.nan)
        self._dev[a, b] = np.where(ok, dev, np.nan)
        self._safety[a, b] = np.where(~ok, np.nan, np.where(risk >= 1.0, 0.0, 1.0 - risk))

    def set_cells(self, i, j, safety):
        """Overwrite assessments directly (synthetic maps for planning).

        ``safety`` NaN marks a cell unknown, 0 impassable; metrics are cleared.
        Cells outside the window are ignored.
        """
        i, j, safety = np.broadcast_arrays(np.asarray(i, dtype=np.int64),
                                           np.asarray(j, dtype=np.int64),
                                           np.asarray(safety, dtype=float))
        inside = self.in_window(i, j)
        a = np.mod(i[inside], self.size)
        b = np.mod(j[inside], self.size)
        s = safety[inside]
        if np.any(s < 0) or np.any(s > 1):
            raise ParameterError("safety must be in [0, 1] or NaN")
        self._state[a, b] = np.where(np.isnan(s), CellState.UNKNOWN,
                                     np.where(s == 0, CellState.IMPASSABLE, CellState.ASSESSED))
        self._safety[a, b] = s
        for arr in (self._tilt, self._rough, self._dev):
            arr[a, b] = np.nan

    # -- persistence --------------------------------------------------------
    def state_dict(self):
        d = {k.lstrip("_"): v for k, v in vars(self).items()
             if isinstance(v, np.ndarray)}
        d["center_cell"] = np.array(self.center_cell if self.center_cell else (0, 0))
        d["has_center"] = np.array(self.center_cell is not None)
        d["cfg"] = np.array([self.cfg.cell_size, self.cfg.map_radius, self.cfg.rover_plane_radius,
                             self.cfg.min_points_per_fit, self.cfg.max_tilt, self.cfg.max_roughness,
                             self.cfg.clearance, self.cfg.max_points_per_cell])
        return d

    def save(self, path):
        np.savez_compressed(path, **self.state_dict())

    @classmethod
    def load(cls, path):
        with np.load(path) as f:
            c = f["cfg"]
            cfg = TraversabilityConfig(float(c[0]), int(c[1]), float(c[2]), int(c[3]),
                                       float(c[4]), float(c[5]), float(c[6]), int(c[7]))
            m = cls(cfg)
            for name in ("wi", "wj", "pts", "ids", "count", "next", "state",
                         "tilt", "rough", "dev", "safety"):
                getattr(m, "_" + name)[...] = f[name]
            if bool(f["has_center"]):
                m.center_cell = tuple(int(v) for v in f["center_cell"])
        for a, b in zip(*np.nonzero(m._count)):
            m._id_set.update(m._ids[a, b, : m._count[a, b]].tolist())
        return m


def cloud_to_world(cloud, pose):
    """Rover-frame cloud to world frame using ``pose`` (x, y, z, heading)."""
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    p = cloud.points
    return np.column_stack([
        pose.x + c * p[:, 0] - s * p[:, 1],
        pose.y + s * p[:, 0] + c * p[:, 1],
        pose.z + cloud.sensor_height + p[:, 2],
    ])


def update_map(tmap: TraversabilityMap, cloud, pose,
               cfg: Optional[TraversabilityConfig] = None) -> TraversabilityMap:
    """Fold one cloud into ``tmap`` (in place) and return it.

    ``pose`` is a PoseEstimate (or a Pose); its mean places the cloud.
    Re-observed feature ids are ignored so each ground point is stored once.
    """
    if cfg is not None and cfg != tmap.cfg:
        raise ParameterError("map was built with a different TraversabilityConfig")
    mean = getattr(pose, "mean", pose)
    ci, cj = tmap.cell_of(mean.x, mean.y)
    tmap.recenter(int(ci), int(cj))
    if len(cloud) == 0:
        return tmap
    world = cloud_to_world(cloud, mean)
    _, _, new_pts = tmap.insert_points(world, cloud.feature_ids)
    if len(new_pts):
        tmap.reassess(tmap.dirty_cells(new_pts))
    return tmap


def oracle_assessment(terrain, i, j, cfg: TraversabilityConfig = TraversabilityConfig(),
                      spacing: float = 0.05) -> CellAssessment:
    """Ground-truth assessment of world cell (i, j) from a dense terrain sample."""
    cs = cfg.cell_size
    r = cfg.rover_plane_radius
    k = int(math.floor(r / spacing))
    g = np.arange(-k, k + 1) * spacing
    gx, gy = np.meshgrid(g, g, indexing="ij")
    keep = gx * gx + gy * gy <= r * r
    x = gx[keep] + i * cs
    y = gy[keep] + j * cs
    inside = (np.abs(x) <= terrain.extent) & (np.abs(y) <= terrain.extent)
    x, y = x[inside], y[inside]
    z = terrain.heights(x, y)
    try:
        fit = fit_cell_plane(np.column_stack([x - i * cs, y - j * cs, z]), 3)
    except (InsufficientDataError, DegenerateGeometryError):
        return UNKNOWN_CELL
    return assess_cell(fit, cfg)
