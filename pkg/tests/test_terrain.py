import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from marsnav.errors import OutOfBoundsError, ParameterError
from marsnav.terrain import (NoiseParams, RegolithSpec, RockSpec, SlopeProfile, TerrainParams,
                             generate_terrain, query_surface)

FLAT = TerrainParams(extent=20.0, noise=NoiseParams(amplitude=0.0))


def test_same_seed_same_model():
    p = TerrainParams(extent=20.0, rock_density=0.05)
    a = generate_terrain(7, p)
    b = generate_terrain(7, p)
    assert a.rocks == b.rocks
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-20, 20, (2, 10_000))
    for fa, fb in zip(a.contact(x, y), b.contact(x, y)):
        np.testing.assert_array_equal(fa, fb)


def test_different_seed_differs():
    p = TerrainParams(extent=20.0)
    assert not np.array_equal(generate_terrain(1, p).heights([1.3, 2.7], [0.4, -3.1]),
                              generate_terrain(2, p).heights([1.3, 2.7], [0.4, -3.1]))


def test_flat_case_is_zero_everywhere():
    t = generate_terrain(3, FLAT)
    assert t.rocks == ()
    x, y = np.random.default_rng(1).uniform(-20, 20, (2, 500))
    np.testing.assert_array_equal(t.heights(x, y), 0.0)
    sp = query_surface(t, 4.0, -2.0)
    assert sp.height == 0.0
    assert sp.normal == (0.0, 0.0, 1.0)


def test_ramp_normal_and_slope():
    # tan(slope) = 0.5 gives h = 0.5 x
    prof = SlopeProfile("ramp", math.degrees(math.atan(0.5)))
    t = generate_terrain(0, TerrainParams(extent=20.0, noise=NoiseParams(amplitude=0.0), profile=prof))
    sp = query_surface(t, 3.0, 1.0)
    assert sp.height == pytest.approx(1.5, abs=1e-12)
    n = np.array([-0.5, 0.0, 1.0]) / math.sqrt(1.25)
    np.testing.assert_allclose(sp.normal, n, atol=1e-12)
    assert math.acos(sp.normal[2]) == pytest.approx(math.atan(0.5), abs=1e-12)


def test_rock_raises_height():
    rock = RockSpec((2.0, 3.0), 0.5, 0.3)
    base = generate_terrain(5, TerrainParams(extent=10.0))
    rocky = generate_terrain(5, TerrainParams(extent=10.0), extra_rocks=[rock])
    pts = np.array([[2.0, 3.0], [2.2, 3.1], [1.7, 2.8]])
    assert np.all(rocky.heights(pts[:, 0], pts[:, 1]) >= base.heights(pts[:, 0], pts[:, 1]))
    assert rocky.heights(2.0, 3.0)[0] - base.heights(2.0, 3.0)[0] == pytest.approx(0.3)
    # outside the footprint nothing changes
    assert rocky.heights(4.0, 3.0)[0] == base.heights(4.0, 3.0)[0]


@given(st.floats(-9.0, 9.0), st.floats(-9.0, 9.0))
def test_normals_match_finite_differences(x, y):
    t = generate_terrain(11, TerrainParams(extent=10.0))
    h = 1e-5
    gx = (t.heights(x + h, y)[0] - t.heights(x - h, y)[0]) / (2 * h)
    gy = (t.heights(x, y + h)[0] - t.heights(x, y - h)[0]) / (2 * h)
    n_fd = np.array([-gx, -gy, 1.0])
    n_fd /= np.linalg.norm(n_fd)
    n = t.normals(x, y)[0]
    np.testing.assert_allclose(n, n_fd, atol=1e-6)
    assert n[2] > 0
    assert np.linalg.norm(n) == pytest.approx(1.0)


def test_slip_clamped_and_monotone_in_slope():
    reg = RegolithSpec(base_slip=0.3, slope_slip_gain=2.0)
    t = generate_terrain(2, TerrainParams(extent=20.0, regolith=reg, noise=NoiseParams(amplitude=1.0)))
    x, y = np.random.default_rng(3).uniform(-19, 19, (2, 2000))
    s = t.slips(x, y)
    assert s.min() >= 0.0 and s.max() <= 0.95
    slope = np.arccos(t.normals(x, y)[:, 2])
    order = np.argsort(slope)
    assert np.all(np.diff(s[order]) >= -1e-12)


def test_slip_noise_stays_in_range():
    reg = RegolithSpec(base_slip=0.5, slip_noise_sigma=2.0)
    t = generate_terrain(2, TerrainParams(extent=10.0, regolith=reg))
    s = t.slips(*np.random.default_rng(0).uniform(-9, 9, (2, 1000)))
    assert s.min() >= 0.0 and s.max() <= 0.95
    assert s.min() == 0.0 and s.max() == 0.95


def test_out_of_bounds_query():
    t = generate_terrain(0, FLAT)
    with pytest.raises(OutOfBoundsError):
        query_surface(t, 20.5, 0.0)
    assert t.contains(20.0, -20.0)


@pytest.mark.parametrize("params", [
    TerrainParams(extent=0.0),
    TerrainParams(extent=-3.0),
    TerrainParams(noise=NoiseParams(wavelength=0.0)),
    TerrainParams(noise=NoiseParams(amplitude=-1.0)),
])
def test_bad_parameters_rejected(params):
    with pytest.raises(ParameterError):
        generate_terrain(0, params)


def test_rock_spec_validation():
    with pytest.raises(ParameterError):
        RockSpec((0.0, 0.0), 0.0, 0.2)
    with pytest.raises(ParameterError):
        RockSpec((0.0, 0.0), 0.5, -0.1)


def test_keepout_respected():
    p = TerrainParams(extent=20.0, rock_density=0.2, keepout=((0.0, 0.0, 3.0),))
    t = generate_terrain(4, p)
    assert len(t.rocks) > 0
    for r in t.rocks:
        assert math.hypot(*r.center) >= 3.0 + r.radius


def test_rocks_drawn_in_range():
    p = TerrainParams(extent=20.0, rock_density=0.05)
    t = generate_terrain(9, p)
    assert len(t.rocks) > 20
    for r in t.rocks:
        assert 0.3 <= r.radius <= 0.8 and 0.15 <= r.height <= 0.4
