"""GPS-free pose estimation: dead reckoning, visual odometry, star fixes, fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DegenerateGeometryError, InsufficientDataError
from .geometry import sinc_half, wrap_angle


@dataclass(frozen=True)
class Pose:
    """Planar pose plus terrain-contact attitude.

    ``z`` is the ground height under the rover; ``roll`` and ``pitch`` come
    from terrain contact and are never integrated.
    """

    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def xy(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class PoseEstimate:
    mean: Pose = Pose()
    position_sigma: float = 0.0
    heading_sigma: float = 0.0
    speed: float = 0.0  # only used by the accelerometer path


@dataclass(frozen=True)
class RelativeTransform:
    """Rover motion from the previous cloud to the current one.

    Expressed in the previous rover frame: a point seen at ``p_curr`` maps to
    ``p_prev = Rz(rotation) @ p_curr + translation``.
    """

    rotation: float
    translation: tuple
    rms_residual: float
    inlier_count: int

    @property
    def distance(self):
        return float(math.sqrt(sum(t * t for t in self.translation)))


@dataclass(frozen=True)
class DeadReckoningConfig:
    sigma_per_m: float = 0.05
    sigma_per_s: float = 1e-4
    heading_sigma_per_s: float = 1e-5
    use_accel: bool = False


@dataclass(frozen=True)
class FusionGains:
    gain_vo: float = 1.0
    gain_star: float = 1.0
    vo_sigma_per_m: float = 0.01
    vo_heading_sigma_per_m: float = 0.002


def dead_reckon_step(state: PoseEstimate, imu, odom=None, dt: float = 1.0,
                     cfg: DeadReckoningConfig = DeadReckoningConfig()) -> PoseEstimate:
    """Propagate the estimate by one IMU/odometry interval.

    Heading integrates the gyro.  Distance comes from the wheel encoder when
    ``odom`` is given, otherwise from the accelerometer if ``cfg.use_accel``.
    Translation follows the chord of a constant-rate turn, so noiseless,
    slip-free arcs are reproduced exactly on flat ground.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    m = state.mean
    dh = imu.gyro_z * dt
    speed = state.speed
    if odom is not None:
        dist = odom.encoder_distance
    elif cfg.use_accel:
        v_new = speed + imu.accel[0] * dt
        dist = 0.5 * (speed + v_new) * dt
        speed = v_new
    else:
        dist = 0.0
    if dist != 0.0:
        mid = m.heading + 0.5 * dh
        horiz = dist * sinc_half(dh) * math.cos(m.pitch)
        x = m.x + horiz * math.cos(mid)
        y = m.y + horiz * math.sin(mid)
        z = m.z + dist * math.sin(m.pitch)
    else:
        x, y, z = m.x, m.y, m.z
    mean = Pose(x, y, m.heading + dh, m.roll, m.pitch, z)
    return PoseEstimate(
        mean,
        state.position_sigma + cfg.sigma_per_m * abs(dist) + cfg.sigma_per_s * dt,
        state.heading_sigma + cfg.heading_sigma_per_s * dt,
        speed,
    )


def visual_odometry(prev, curr, min_matches: int = 3) -> RelativeTransform:
    """Yaw-constrained rigid alignment of two clouds via shared feature ids."""
    if prev.feature_ids is None or curr.feature_ids is None:
        raise InsufficientDataError("clouds carry no feature ids")
    _, ip, ic = np.intersect1d(prev.feature_ids, curr.feature_ids,
                               assume_unique=True, return_indices=True)
    n = len(ip)
    if n < max(3, min_matches):
        raise InsufficientDataError(f"only {n} shared features (need {max(3, min_matches)})")
    dst = prev.points[ip]
    src = curr.points[ic]
    dmean = dst.mean(axis=0)
    smean = src.mean(axis=0)
    d = dst[:, :2] - dmean[:2]
    s = src[:, :2] - smean[:2]
    cov = s.T @ s
    ev = np.linalg.eigvalsh(cov)
    if ev[1] <= 0 or ev[0] <= 1e-12 * ev[1]:
        raise DegenerateGeometryError("matched points are collinear in the ground plane")
    num = float(np.sum(s[:, 0] * d[:, 1] - s[:, 1] * d[:, 0]))
    den = float(np.sum(s[:, 0] * d[:, 0] + s[:, 1] * d[:, 1]))
    theta = math.atan2(num, den)
    c, sn = math.cos(theta), math.sin(theta)
    tx = dmean[0] - (c * smean[0] - sn * smean[1])
    ty = dmean[1] - (sn * smean[0] + c * smean[1])
    tz = dmean[2] - smean[2]
    rx = c * src[:, 0] - sn * src[:, 1] + tx - dst[:, 0]
    ry = sn * src[:, 0] + c * src[:, 1] + ty - dst[:, 1]
    rz = src[:, 2] + tz - dst[:, 2]
    rms = float(np.sqrt(np.mean(rx * rx + ry * ry + rz * rz)))
    return RelativeTransform(theta, (float(tx), float(ty), float(tz)), rms, n)


def fuse_pose(dr: PoseEstimate, vo: Optional[RelativeTransform] = None, star=None,
              gains: FusionGains = FusionGains(),
              anchor: Optional[PoseEstimate] = None) -> PoseEstimate:
    """Fixed-gain complementary blend of dead reckoning with VO and star fixes.

    ``anchor`` is the estimate at the time of the VO reference cloud; the VO
    motion replaces the dead-reckoned motion since then with weight
    ``gains.gain_vo``.  A star fix pulls the heading with ``gains.gain_star``.
    Sigmas never grow here.
    """
    out = dr
    if vo is not None:
        if anchor is None:
            raise ValueError("a VO correction needs the anchor estimate")
        a, d = anchor.mean, dr.mean
        g = gains.gain_vo
        c, s = math.cos(a.heading), math.sin(a.heading)
        tx, ty, tz = vo.translation
        vx, vy = c * tx - s * ty, s * tx + c * ty
        dh_dr = wrap_angle(d.heading - a.heading)
        if g == 1.0:
            x, y, z = a.x + vx, a.y + vy, a.z + tz
            heading = a.heading + vo.rotation
        else:
            x = a.x + (1 - g) * (d.x - a.x) + g * vx
            y = a.y + (1 - g) * (d.y - a.y) + g * vy
            z = a.z + (1 - g) * (d.z - a.z) + g * tz
            heading = a.heading + (1 - g) * dh_dr + g * vo.rotation
        grow_dr = max(dr.position_sigma - anchor.position_sigma, 0.0)
        grow_vo = gains.vo_sigma_per_m * vo.distance
        hgrow_dr = max(dr.heading_sigma - anchor.heading_sigma, 0.0)
        hgrow_vo = gains.vo_heading_sigma_per_m * vo.distance
        pos_sigma = anchor.position_sigma + (1 - g) * grow_dr + g * min(grow_dr, grow_vo)
        head_sigma = anchor.heading_sigma + (1 - g) * hgrow_dr + g * min(hgrow_dr, hgrow_vo)
        out = PoseEstimate(Pose(x, y, heading, d.roll, d.pitch, z),
                           min(pos_sigma, dr.position_sigma),
                           min(head_sigma, dr.heading_sigma), dr.speed)
    if star is not None:
        gs = gains.gain_star
        h = out.mean.heading
        heading = star.heading if gs == 1.0 else h + gs * wrap_angle(star.heading - h)
        hs = min(out.heading_sigma, (1 - gs) * out.heading_sigma + gs * star.sigma)
        out = replace(out, mean=replace(out.mean, heading=heading), heading_sigma=hs)
    return out
