"""Small planar geometry helpers shared by several modules."""

import math

import numpy as np


def wrap_angle(angle):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    if np.ndim(angle) == 0:
        angle = float(angle)
        if -math.pi < angle <= math.pi:
            return angle
        a = math.fmod(angle + math.pi, 2.0 * math.pi)
        if a <= 0.0:
            a += 2.0 * math.pi
        return a - math.pi
    angle = np.asarray(angle, dtype=float)
    a = np.mod(angle + np.pi, 2.0 * np.pi)
    a = np.where(a <= 0.0, a + 2.0 * np.pi, a) - np.pi
    return np.where((angle > -np.pi) & (angle <= np.pi), angle, a)


def rot2(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotz(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def arc_endpoint(curvature, length):
    """Endpoint and final heading of a constant-curvature arc from the origin."""
    if abs(curvature) < 1e-12:
        return length, 0.0, 0.0
    a = curvature * length
    return math.sin(a) / curvature, (1.0 - math.cos(a)) / curvature, a


def sinc_half(dtheta):
    """sin(d/2)/(d/2): chord-to-arc ratio for a turn of ``dtheta``."""
    h = 0.5 * dtheta
    if abs(h) < 1e-8:
        return 1.0 - h * h / 6.0
    return math.sin(h) / h


_CELL_BIAS = 1 << 30


def unique_cells(i, j):
    """Sorted unique (M, 2) integer cell pairs; faster than a row-wise unique."""
    key = (np.asarray(i, dtype=np.int64) + _CELL_BIAS) * (1 << 31) + (
        np.asarray(j, dtype=np.int64) + _CELL_BIAS)
    key = np.unique(key)
    return np.column_stack([(key >> 31) - _CELL_BIAS, (key & 0x7FFFFFFF) - _CELL_BIAS])
