"""Simulated onboard sensors: stereo point clouds, IMU, wheel odometry, star tracker.

Stereo is modeled as noisy depth along lines of sight.  The ground is
sampled on a fixed world lattice (``feature_spacing``) so that a lattice
node seen twice yields the same feature id; that is the stand-in for a
feature matcher.  Occlusion is resolved per azimuth ray: a node is visible
when its elevation angle from the camera is not below any nearer node on the
same ray or on either neighbouring ray.

Clouds are expressed in the *rover frame*: origin at the camera centre
(rover x, y; ground height + ``mount_height``), x along the rover heading,
y to the left, z up.  Roll and pitch are compensated by the inclinometer, so
the frame is gravity-levelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .defaults import HAZCAM_FOV_DEG, IMU_RATE_HZ, NAVCAM_FOV_DEG, SOL_LENGTH_S, MAX_SLIP
from .errors import ParameterError
from .geometry import wrap_angle

_ID_OFFSET = 1 << 30
_ID_STRIDE = 1 << 31


@dataclass(frozen=True)
class CameraConfig:
    name: str = "hazcam"
    fov_deg: float = HAZCAM_FOV_DEG
    max_range: float = 4.0
    min_range: float = 0.5
    mount_height: float = 0.8
    mount_yaw: float = 0.0
    angular_resolution: float = math.radians(1.0)
    depth_noise_sigma: float = 0.01
    feature_spacing: float = 0.1

    def __post_init__(self):
        if not 0 < self.fov_deg <= 180:
            raise ParameterError(f"fov_deg must be in (0, 180], got {self.fov_deg}")
        if not self.max_range > 0:
            raise ParameterError(f"max_range must be > 0, got {self.max_range}")
        if self.min_range < 0:
            raise ParameterError("min_range must be >= 0")
        if not self.angular_resolution > 0:
            raise ParameterError("angular_resolution must be > 0")
        if not self.feature_spacing > 0:
            raise ParameterError("feature_spacing must be > 0")
        if self.depth_noise_sigma < 0:
            raise ParameterError("depth_noise_sigma must be >= 0")


def hazcam(**overrides) -> CameraConfig:
    return CameraConfig(**{"name": "hazcam", "fov_deg": HAZCAM_FOV_DEG, **overrides})


def navcam(**overrides) -> CameraConfig:
    base = dict(name="navcam", fov_deg=NAVCAM_FOV_DEG, max_range=5.0, min_range=0.3,
                mount_height=1.9, angular_resolution=math.radians(0.5))
    base.update(overrides)
    return CameraConfig(**base)


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3) rover frame
    feature_ids: Optional[np.ndarray] = None  # (N,) int64
    timestamp: float = 0.0
    sensor_height: float = 0.0
    frame: str = "rover"

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls, timestamp=0.0, sensor_height=0.0):
        return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), timestamp, sensor_height)


def feature_id(i, j):
    """Stable id of lattice node (i, j)."""
    return (np.asarray(i, dtype=np.int64) + _ID_OFFSET) * _ID_STRIDE + (
        np.asarray(j, dtype=np.int64) + _ID_OFFSET)


def capture_point_cloud(terrain, true_pose, cam: CameraConfig, rng=None,
                        timestamp: float = 0.0) -> PointCloud:
    """Stereo capture from ``true_pose`` (needs ``x``, ``y``, ``heading``)."""
    px, py, heading = true_pose.x, true_pose.y, true_pose.heading
    zc = float(terrain.heights(px, py)[0]) + cam.mount_height
    sp = cam.feature_spacing
    r_max = cam.max_range
    ext = terrain.extent
    i0 = int(math.ceil(max(px - r_max, -ext) / sp))
    i1 = int(math.floor(min(px + r_max, ext) / sp))
    j0 = int(math.ceil(max(py - r_max, -ext) / sp))
    j1 = int(math.floor(min(py + r_max, ext) / sp))
    if i1 < i0 or j1 < j0:
        return PointCloud.empty(timestamp, cam.mount_height)
    ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    wx = ii * sp
    wy = jj * sp
    dx = wx - px
    dy = wy - py
    rng_h = np.hypot(dx, dy)
    half_fov = math.radians(cam.fov_deg) / 2.0
    rel = wrap_angle(np.arctan2(dy, dx) - heading - cam.mount_yaw)
    keep = (rng_h >= cam.min_range) & (rng_h <= r_max) & (np.abs(rel) <= half_fov)
    if not keep.any():
        return PointCloud.empty(timestamp, cam.mount_height)
    ii, jj, wx, wy, dx, dy, rng_h, rel = (a[keep] for a in (ii, jj, wx, wy, dx, dy, rng_h, rel))
    wz = terrain.heights(wx, wy)
    dz = wz - zc

    # per-ray horizon test; a return is also hidden by nearer, higher returns
    # in the two adjacent rays so slivers between bins cannot leak through
    ray = np.floor((rel + half_fov) / cam.angular_resolution).astype(np.int64)
    elev = np.arctan2(dz, rng_h)
    order = np.lexsort((rng_h, ray))
    r_s, e_s, b_s = rng_h[order], elev[order], ray[order]
    starts = np.flatnonzero(np.r_[True, b_s[1:] != b_s[:-1]])
    seg = np.repeat(np.arange(len(starts)), np.diff(np.r_[starts, len(b_s)]))
    # running maximum restarted at each ray: offset each ray into its own band
    band = 10.0 * seg
    cummax = np.maximum.accumulate(e_s + band) - band
    horizon = np.full(len(b_s), -np.inf)
    before = np.arange(len(b_s)) > starts[seg]
    horizon[before] = cummax[np.flatnonzero(before) - 1]
    # sorted (ray, range) keys: the last strictly nearer return of ray b+step
    # sits just before the insertion point of (b+step, r)
    span = 2.0 * r_max + 1.0
    key = b_s * span + r_s
    for step in (-1, 1):
        pos = np.searchsorted(key, (b_s + step) * span + r_s, side="left") - 1
        ok = pos >= 0
        ok[ok] = b_s[pos[ok]] == b_s[ok] + step
        horizon[ok] = np.maximum(horizon[ok], cummax[pos[ok]])
    visible = np.empty(len(order), dtype=bool)
    visible[order] = e_s >= horizon

    dx, dy, dz, ii, jj = dx[visible], dy[visible], dz[visible], ii[visible], jj[visible]
    if cam.depth_noise_sigma > 0 and len(dx):
        if rng is None:
            raise ParameterError("a random generator is required when depth noise is on")
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        scale = 1.0 + rng.normal(0.0, cam.depth_noise_sigma, size=len(dx)) / dist
        dx, dy, dz = dx * scale, dy * scale, dz * scale
    c, s = math.cos(heading), math.sin(heading)
    pts = np.column_stack([c * dx + s * dy, -s * dx + c * dy, dz])
    return PointCloud(pts, feature_id(ii, jj), timestamp, cam.mount_height)


# -- IMU --------------------------------------------------------------------

@dataclass(frozen=True)
class ImuConfig:
    rate: float = IMU_RATE_HZ
    gyro_bias: float = 0.0
    gyro_noise_sigma: float = 0.0
    accel_bias: Tuple[float, float] = (0.0, 0.0)
    accel_noise_sigma: float = 0.0


@dataclass(frozen=True)
class BodyMotion:
    """True planar body rates fed to the IMU model."""

    yaw_rate: float = 0.0
    accel: Tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class ImuSample:
    gyro_z: float
    accel: Tuple[float, float]
    timestamp: float
    count: int = 1  # samples averaged into this reading


def sample_imu(true_motion: BodyMotion, config: ImuConfig = ImuConfig(), rng=None,
               timestamp: float = 0.0) -> ImuSample:
    gz = true_motion.yaw_rate + config.gyro_bias
    ax = true_motion.accel[0] + config.accel_bias[0]
    ay = true_motion.accel[1] + config.accel_bias[1]
    if config.gyro_noise_sigma > 0:
        gz += rng.normal(0.0, config.gyro_noise_sigma)
    if config.accel_noise_sigma > 0:
        ax += rng.normal(0.0, config.accel_noise_sigma)
        ay += rng.normal(0.0, config.accel_noise_sigma)
    return ImuSample(gz, (ax, ay), timestamp)


def sample_imu_window(true_motion: BodyMotion, duration: float, config: ImuConfig = ImuConfig(),
                      rng=None, t_end: float = 0.0) -> ImuSample:
    """Mean of the ``round(duration * rate)`` IMU samples in one window.

    The mean of n i.i.d. Gaussian readings is drawn directly with sigma/sqrt(n).
    """
    n = max(1, int(round(duration * config.rate)))
    gz = true_motion.yaw_rate + config.gyro_bias
    ax = true_motion.accel[0] + config.accel_bias[0]
    ay = true_motion.accel[1] + config.accel_bias[1]
    if config.gyro_noise_sigma > 0:
        gz += rng.normal(0.0, config.gyro_noise_sigma / math.sqrt(n))
    if config.accel_noise_sigma > 0:
        sig = config.accel_noise_sigma / math.sqrt(n)
        ax += rng.normal(0.0, sig)
        ay += rng.normal(0.0, sig)
    return ImuSample(gz, (ax, ay), t_end, n)


# -- wheel odometry ---------------------------------------------------------

@dataclass(frozen=True)
class WheelOdomSample:
    encoder_distance: float
    commanded_curvature: float
    timestamp: float


def sample_wheel_odometry(commanded_length: float, ground_slip: float,
                          commanded_curvature: float = 0.0, rng=None,
                          timestamp: float = 0.0):
    """Encoder reading and the true ground travel for one commanded arc step.

    Returns ``(sample, ground_travel)``.  The encoder counts wheel rotation,
    so it reports the full commanded length whatever the slip.
    """
    if not 0.0 <= ground_slip <= MAX_SLIP:
        raise ParameterError(f"slip must be in [0, {MAX_SLIP}], got {ground_slip}")
    sample = WheelOdomSample(float(commanded_length), float(commanded_curvature), timestamp)
    return sample, commanded_length * (1.0 - ground_slip)


# -- star tracker -----------------------------------------------------------

@dataclass(frozen=True)
class StarTrackerConfig:
    sigma: float = 0.001
    sol_length: float = SOL_LENGTH_S
    night_fraction: float = 0.5


@dataclass(frozen=True)
class StarFix:
    heading: float
    sigma: float
    timestamp: float


def is_night(sim_time: float, config: StarTrackerConfig) -> bool:
    """Local time is ``sim_time`` modulo the sol, midnight at 0."""
    tod = math.fmod(sim_time, config.sol_length)
    if tod < 0:
        tod += config.sol_length
    half = 0.5 * config.night_fraction * config.sol_length
    return tod < half or tod > config.sol_length - half


def sample_star_fix(true_heading: float, sim_time: float,
                    config: StarTrackerConfig = StarTrackerConfig(), rng=None) -> Optional[StarFix]:
    """Absolute heading fix, or ``None`` in daylight."""
    if not is_night(sim_time, config):
        return None
    heading = true_heading
    if config.sigma > 0:
        heading = true_heading + rng.normal(0.0, config.sigma)
    return StarFix(wrap_angle(heading), config.sigma, sim_time)


@dataclass
class SensorRngs:
    """Independent generator per sensor, split from one mission seed."""

    hazcam: np.random.Generator
    navcam: np.random.Generator
    imu: np.random.Generator
    odometry: np.random.Generator
    star: np.random.Generator

    @classmethod
    def from_seed(cls, seed):
        streams = np.random.SeedSequence([seed, 0x5E45]).spawn(5)
        return cls(*(np.random.default_rng(s) for s in streams))
