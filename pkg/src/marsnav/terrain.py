"""Procedural ground truth: heightfield, rocks and regolith slip.

The heightfield is a sum of seeded value-noise octaves (quintic
interpolation, so heights are C2 and gradients analytic), an optional
analytic slope profile, and hemispherical rock bumps.  Everything is
precomputed in :func:`generate_terrain`; a :class:`TerrainModel` is
read-only afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .defaults import MAX_SLIP
from .errors import OutOfBoundsError, ParameterError

# Rock rims are vertical; clamp the bump's sqrt argument so gradients stay finite.
_RIM_EPS = 1e-4


@dataclass(frozen=True)
class NoiseParams:
    amplitude: float = 0.15
    wavelength: float = 10.0
    octaves: int = 3
    persistence: float = 0.5
    lacunarity: float = 2.0


@dataclass(frozen=True)
class SlopeProfile:
    """Analytic slope along +x added to the noise.

    ``ramp``: constant slope ``slope_deg`` everywhere.
    ``sweep``: slope angle rises linearly from 0 at x=0 to ``slope_deg`` at
    x=``length`` and stays there; flat for x<0.
    """

    kind: str = "ramp"
    slope_deg: float = 0.0
    length: float = 20.0


@dataclass(frozen=True)
class RockSpec:
    center: Tuple[float, float]
    radius: float
    height: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError(f"rock radius must be > 0, got {self.radius}")
        if not self.height > 0:
            raise ParameterError(f"rock height must be > 0, got {self.height}")


@dataclass(frozen=True)
class RegolithSpec:
    base_slip: float = 0.05
    slope_slip_gain: float = 0.5
    slip_noise_sigma: float = 0.0
    slip_noise_wavelength: float = 2.0


@dataclass(frozen=True)
class TerrainParams:
    extent: float = 60.0
    noise: NoiseParams = field(default_factory=NoiseParams)
    rock_density: float = 0.0
    rock_radius: Tuple[float, float] = (0.3, 0.8)
    rock_height: Tuple[float, float] = (0.15, 0.4)
    # (x, y, r): no rock footprint may intersect these disks
    keepout: Tuple[Tuple[float, float, float], ...] = ()
    regolith: RegolithSpec = field(default_factory=RegolithSpec)
    profile: Optional[SlopeProfile] = None


@dataclass(frozen=True)
class SurfacePoint:
    height: float
    normal: Tuple[float, float, float]
    slip: float


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _dfade(t):
    return 30.0 * t * t * (t * (t - 2.0) + 1.0)


class _ValueNoise:
    """One octave of 2D value noise on a square lattice."""

    def __init__(self, rng, extent, spacing):
        self.origin = -extent
        self.spacing = spacing
        n = int(math.ceil(2.0 * extent / spacing)) + 3
        self.values = rng.uniform(-1.0, 1.0, size=(n, n))
        self.values.setflags(write=False)

    def evaluate(self, x, y, want_grad=True):
        gx = (x - self.origin) / self.spacing
        gy = (y - self.origin) / self.spacing
        ix = np.floor(gx).astype(np.intp)
        iy = np.floor(gy).astype(np.intp)
        tx = gx - ix
        ty = gy - iy
        v = self.values
        v00 = v[ix, iy]
        v10 = v[ix + 1, iy]
        v01 = v[ix, iy + 1]
        v11 = v[ix + 1, iy + 1]
        u = _fade(tx)
        w = _fade(ty)
        k = v00 - v10 - v01 + v11
        val = v00 + (v10 - v00) * u + (v01 - v00) * w + k * u * w
        if not want_grad:
            return val, None, None
        dx = ((v10 - v00) + k * w) * _dfade(tx) / self.spacing
        dy = ((v01 - v00) + k * u) * _dfade(ty) / self.spacing
        return val, dx, dy


class TerrainModel:
    """Immutable ground-truth world.  Build with :func:`generate_terrain`."""

    def __init__(self, seed, params, octaves, slip_noise, rocks):
        self.seed = seed
        self.params = params
        self.extent = float(params.extent)
        self._octaves = octaves  # list of (weight, _ValueNoise)
        self._slip_noise = slip_noise
        self.rocks: Tuple[RockSpec, ...] = tuple(rocks)
        self._build_rock_index()

    # -- rock spatial index -------------------------------------------------
    def _build_rock_index(self):
        rocks = self.rocks
        self._rock_arr = np.array(
            [[r.center[0], r.center[1], r.radius, r.height] for r in rocks], dtype=float
        ).reshape(-1, 4)
        if not rocks:
            self._bin_size = 1.0
            self._bins = np.full((1, 1, 1), -1, dtype=np.intp)
            return
        rmax = float(self._rock_arr[:, 2].max())
        self._bin_size = max(2.0 * rmax, 0.5)
        nb = int(math.ceil(2.0 * self.extent / self._bin_size)) + 1
        buckets = [[[] for _ in range(nb)] for _ in range(nb)]
        for k, (cx, cy, r, _) in enumerate(self._rock_arr):
            i0, i1 = self._bin_of(cx - r), self._bin_of(cx + r)
            j0, j1 = self._bin_of(cy - r), self._bin_of(cy + r)
            for i in range(max(i0, 0), min(i1, nb - 1) + 1):
                for j in range(max(j0, 0), min(j1, nb - 1) + 1):
                    buckets[i][j].append(k)
        depth = max(1, max(len(b) for row in buckets for b in row))
        table = np.full((nb, nb, depth), -1, dtype=np.intp)
        for i in range(nb):
            for j in range(nb):
                b = buckets[i][j]
                table[i, j, : len(b)] = b
        table.setflags(write=False)
        self._bins = table

    def _bin_of(self, v):
        return int(math.floor((v + self.extent) / self._bin_size))

    # -- queries ------------------------------------------------------------
    def contains(self, x, y):
        return abs(x) <= self.extent and abs(y) <= self.extent

    def _check(self, x, y):
        if np.any(np.abs(x) > self.extent) or np.any(np.abs(y) > self.extent):
            raise OutOfBoundsError(f"query outside terrain extent ±{self.extent} m")

    def _profile(self, x):
        p = self.params.profile
        if p is None:
            return 0.0, 0.0
        theta = math.radians(p.slope_deg)
        if p.kind == "ramp":
            t = math.tan(theta)
            return t * x, np.full_like(x, t)
        if p.kind == "sweep":
            k = theta / p.length
            xc = np.clip(x, 0.0, p.length)
            h = -np.log(np.cos(k * xc)) / k if k > 0 else np.zeros_like(x)
            slope = np.tan(k * xc)
            beyond = np.maximum(x - p.length, 0.0)
            return h + beyond * math.tan(theta), slope
        raise ParameterError(f"unknown slope profile {p.kind!r}")

    def _rocks(self, x, y):
        h = np.zeros_like(x)
        gx = np.zeros_like(x)
        gy = np.zeros_like(x)
        if not self.rocks:
            return h, gx, gy
        nb = self._bins.shape[0]
        bi = np.clip(np.floor((x + self.extent) / self._bin_size).astype(np.intp), 0, nb - 1)
        bj = np.clip(np.floor((y + self.extent) / self._bin_size).astype(np.intp), 0, nb - 1)
        cand = self._bins[bi, bj]  # (N, depth)
        valid = cand >= 0
        rk = self._rock_arr[np.where(valid, cand, 0)]  # (N, depth, 4)
        dx = x[:, None] - rk[..., 0]
        dy = y[:, None] - rk[..., 1]
        r = rk[..., 2]
        q = 1.0 - (dx * dx + dy * dy) / (r * r)
        inside = valid & (q > 0.0)
        qc = np.maximum(q, _RIM_EPS)
        s = np.sqrt(qc)
        bump = np.where(inside, rk[..., 3] * s, 0.0)
        coef = np.where(inside, -rk[..., 3] / (r * r * s), 0.0)
        h = bump.sum(axis=1)
        gx = (coef * dx).sum(axis=1)
        gy = (coef * dy).sum(axis=1)
        return h, gx, gy

    def height_and_gradient(self, x, y):
        """Vectorized heights and (dh/dx, dh/dy) at arrays of points."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        self._check(x, y)
        h = np.zeros_like(x)
        gx = np.zeros_like(x)
        gy = np.zeros_like(x)
        for weight, octave in self._octaves:
            v, dx, dy = octave.evaluate(x, y)
            h += weight * v
            gx += weight * dx
            gy += weight * dy
        if self.params.profile is not None:
            ph, pg = self._profile(x)
            h += ph
            gx += pg
        rh, rgx, rgy = self._rocks(x, y)
        return h + rh, gx + rgx, gy + rgy

    def heights(self, x, y):
        return self.height_and_gradient(x, y)[0]

    def normals(self, x, y):
        _, gx, gy = self.height_and_gradient(x, y)
        n = np.stack([-gx, -gy, np.ones_like(gx)], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def slips(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        _, gx, gy = self.height_and_gradient(x, y)
        return self._slip_from(x, y, gx, gy)

    def _slip_from(self, x, y, gx, gy):
        reg = self.params.regolith
        slope = np.arctan(np.hypot(gx, gy))
        s = reg.base_slip + reg.slope_slip_gain * slope
        if reg.slip_noise_sigma > 0.0:
            v, _, _ = self._slip_noise.evaluate(x, y, want_grad=False)
            s = s + reg.slip_noise_sigma * v
        return np.clip(s, 0.0, MAX_SLIP)

    def contact(self, x, y):
        """Heights, gradients and slips in one pass: (h, gx, gy, slip)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        h, gx, gy = self.height_and_gradient(x, y)
        return h, gx, gy, self._slip_from(x, y, gx, gy)

    def query(self, x, y):
        h, gx, gy = self.height_and_gradient(x, y)
        n = np.array([-gx[0], -gy[0], 1.0])
        n /= np.linalg.norm(n)
        slip = self._slip_from(np.atleast_1d(float(x)), np.atleast_1d(float(y)), gx, gy)
        return SurfacePoint(float(h[0]), (float(n[0]), float(n[1]), float(n[2])), float(slip[0]))


def query_surface(terrain: TerrainModel, x: float, y: float) -> SurfacePoint:
    """Height, unit normal and slip ratio at one ground point."""
    return terrain.query(x, y)


def _place_rocks(rng, params: TerrainParams) -> list:
    area = (2.0 * params.extent) ** 2
    count = int(rng.poisson(params.rock_density * area)) if params.rock_density > 0 else 0
    if count == 0:
        return []
    centers = rng.uniform(-params.extent, params.extent, size=(count, 2))
    radii = rng.uniform(params.rock_radius[0], params.rock_radius[1], size=count)
    heights = rng.uniform(params.rock_height[0], params.rock_height[1], size=count)
    rocks = []
    for (cx, cy), r, h in zip(centers, radii, heights):
        if any(math.hypot(cx - kx, cy - ky) < r + kr for kx, ky, kr in params.keepout):
            continue
        rocks.append(RockSpec((float(cx), float(cy)), float(r), float(h)))
    return rocks


def generate_terrain(seed: int, params: Optional[TerrainParams] = None,
                     extra_rocks: Sequence[RockSpec] = ()) -> TerrainModel:
    """Build a deterministic world from ``seed`` and ``params``."""
    params = params or TerrainParams()
    noise = params.noise
    if not params.extent > 0:
        raise ParameterError(f"extent must be > 0, got {params.extent}")
    if not noise.wavelength > 0:
        raise ParameterError(f"wavelength must be > 0, got {noise.wavelength}")
    if noise.amplitude < 0:
        raise ParameterError(f"amplitude must be >= 0, got {noise.amplitude}")
    if noise.octaves < 1:
        raise ParameterError(f"octaves must be >= 1, got {noise.octaves}")
    if params.rock_density < 0:
        raise ParameterError(f"rock_density must be >= 0, got {params.rock_density}")
    if not 0.0 <= params.regolith.base_slip < 1.0:
        raise ParameterError(f"base_slip must be in [0, 1), got {params.regolith.base_slip}")
    if not params.regolith.slip_noise_wavelength > 0:
        raise ParameterError("slip_noise_wavelength must be > 0")
    if params.profile is not None:
        if params.profile.kind not in ("ramp", "sweep"):
            raise ParameterError(f"unknown slope profile {params.profile.kind!r}")
        if not 0.0 <= params.profile.slope_deg < 90.0:
            raise ParameterError("profile slope_deg must be in [0, 90)")
        if params.profile.kind == "sweep" and not params.profile.length > 0:
            raise ParameterError("sweep length must be > 0")

    noise_ss, rock_ss, slip_ss = np.random.SeedSequence(seed).spawn(3)
    noise_rng = np.random.default_rng(noise_ss)
    octaves = []
    if noise.amplitude > 0:
        for k in range(noise.octaves):
            spacing = noise.wavelength / noise.lacunarity ** k
            weight = noise.amplitude * noise.persistence ** k
            octaves.append((weight, _ValueNoise(noise_rng, params.extent, spacing)))
    slip_noise = _ValueNoise(np.random.default_rng(slip_ss), params.extent,
                             params.regolith.slip_noise_wavelength)
    rocks = _place_rocks(np.random.default_rng(rock_ss), params) + list(extra_rocks)
    return TerrainModel(seed, params, octaves, slip_noise, rocks)
