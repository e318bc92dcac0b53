import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from marsnav.errors import DegenerateGeometryError, InsufficientDataError, ParameterError
from marsnav.localization import Pose, PoseEstimate
from marsnav.sensing import PointCloud, capture_point_cloud, hazcam
from marsnav.terrain import NoiseParams, TerrainParams, generate_terrain
from marsnav.traversability import (CellState, PlaneFit, TraversabilityConfig, TraversabilityMap,
                                    assess_cell, fit_cell_plane, oracle_assessment, update_map)

CFG = TraversabilityConfig()


def fit_of(tilt=0.0, rough=0.0, dev=0.0):
    return PlaneFit((0.0, 0.0, 1.0), 0.0, tilt, rough, dev, 50, (0.0, 0.0, 0.0))


def grid_points(fn, half=1.0, step=0.1):
    g = np.arange(-half, half + 1e-9, step)
    x, y = np.meshgrid(g, g)
    x, y = x.ravel(), y.ravel()
    return np.column_stack([x, y, fn(x, y)])


# -- plane fit ----------------------------------------------------------------

def test_flat_plane():
    f = fit_cell_plane(grid_points(lambda x, y: 0 * x))
    assert f.tilt == 0.0 and f.residual_rms == 0.0 and f.max_deviation == 0.0
    assert f.normal == (0.0, 0.0, 1.0)


def test_half_slope_plane():
    f = fit_cell_plane(grid_points(lambda x, y: 0.5 * x))
    assert f.tilt == pytest.approx(0.4636476090008061, abs=1e-12)
    assert f.residual_rms < 1e-15
    n = np.array(f.normal)
    np.testing.assert_allclose(n, np.array([-0.5, 0.0, 1.0]) / math.sqrt(1.25), atol=1e-15)


def test_plane_fit_errors():
    with pytest.raises(InsufficientDataError):
        fit_cell_plane([[0, 0, 0], [1, 0, 0]])
    with pytest.raises(InsufficientDataError):
        fit_cell_plane(grid_points(lambda x, y: x), min_points=10_000)
    with pytest.raises(DegenerateGeometryError):
        fit_cell_plane([[0, 0, 0], [1, 1, 0], [2, 2, 1], [3, 3, 0]])


def test_seeded_planes_recovered_exactly():
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(-1, 1, 2)
        c = rng.uniform(-5, 5)
        n = int(rng.integers(10, 60))
        xy = rng.uniform(-0.5, 0.5, (n, 2))
        f = fit_cell_plane(np.column_stack([xy, a * xy[:, 0] + b * xy[:, 1] + c]))
        np.testing.assert_allclose(f.coefficients, (a, b, c), atol=1e-9)
        assert abs(f.tilt - math.atan(math.hypot(a, b))) < 1e-9


def test_noisy_plane_matches_lstsq_and_tilt_tolerance():
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        a, b, c = rng.uniform(-0.5, 0.5, 3)
        xy = rng.uniform(-0.5, 0.5, (200, 2))
        z = a * xy[:, 0] + b * xy[:, 1] + c + rng.normal(0, 0.01, 200)
        f = fit_cell_plane(np.column_stack([xy, z]))
        # independent oracle: numpy least squares
        A = np.column_stack([xy, np.ones(200)])
        coef, *_ = np.linalg.lstsq(A, z, rcond=None)
        np.testing.assert_allclose(f.coefficients, coef, atol=1e-10)
        res = z - A @ coef
        assert f.residual_rms == pytest.approx(np.sqrt(np.mean(res ** 2)), rel=1e-9)
        assert f.max_deviation == pytest.approx(np.abs(res).max(), rel=1e-9)
        worst = max(worst, abs(f.tilt - math.atan(math.hypot(a, b))))
    assert worst < math.radians(0.5)


# -- assessment ---------------------------------------------------------------

def test_assess_examples():
    assert assess_cell(fit_of(1.2 * CFG.max_tilt)).state == CellState.IMPASSABLE
    assert assess_cell(fit_of(1.2 * CFG.max_tilt)).safety_index == 0.0
    ok = assess_cell(fit_of())
    assert ok.state == CellState.ASSESSED and ok.safety_index == 1.0
    assert assess_cell(fit_of(0.5 * CFG.max_tilt)).safety_index == pytest.approx(0.5)
    assert assess_cell(fit_of(rough=CFG.max_roughness)).state == CellState.IMPASSABLE
    assert assess_cell(fit_of(dev=0.75 * CFG.clearance)).safety_index == pytest.approx(0.25)


metric = st.floats(0.0, 2.0)


@given(metric, metric, metric, st.floats(0.0, 1.0), st.integers(0, 2))
def test_index_monotone_in_each_metric(t, r, d, extra, which):
    base = [t * CFG.max_tilt, r * CFG.max_roughness, d * CFG.clearance]
    more = list(base)
    more[which] += extra * [CFG.max_tilt, CFG.max_roughness, CFG.clearance][which]
    a, b = assess_cell(fit_of(*base)), assess_cell(fit_of(*more))
    assert b.safety_index <= a.safety_index
    assert (a.state == CellState.IMPASSABLE) == (a.safety_index == 0.0)


def test_config_validation():
    for bad in (dict(cell_size=0.0), dict(map_radius=0), dict(rover_plane_radius=0.1),
                dict(min_points_per_fit=2), dict(max_tilt=0.0), dict(max_points_per_cell=0)):
        with pytest.raises(ParameterError):
            TraversabilityConfig(**bad)


# -- map ----------------------------------------------------------------------

FLAT = generate_terrain(0, TerrainParams(extent=30.0, noise=NoiseParams(amplitude=0.0)))


def flat_cloud(pose=Pose()):
    return capture_point_cloud(FLAT, pose, hazcam(depth_noise_sigma=0.0))


def test_flat_cloud_cells_all_fully_safe():
    m = update_map(TraversabilityMap(), flat_cloud(), PoseEstimate())
    state, safety = m.grid()
    assessed = state == CellState.ASSESSED
    assert assessed.sum() > 50
    assert not (state == CellState.IMPASSABLE).any()
    np.testing.assert_allclose(safety[assessed], 1.0, atol=1e-12)


def test_sparse_neighbourhood_stays_unknown():
    pts = np.array([[0.0, 0.0, -0.8], [0.1, 0.0, -0.8], [0.0, 0.1, -0.8], [0.1, 0.1, -0.8]])
    m = update_map(TraversabilityMap(), PointCloud(pts, np.arange(4), 0.0, 0.8), Pose())
    assert m.point_count() == 4
    assert m.coverage() == 0.0


def test_map_center_snapped_and_scrolls_one_cell_east():
    cfg = TraversabilityConfig(map_radius=6)
    m = update_map(TraversabilityMap(cfg), flat_cloud(), Pose(0.1, 0.0))
    assert m.center == (0.0, 0.0)
    before_state, before_safety = m.grid()
    update_map(m, PointCloud.empty(), Pose(0.25, 0.0))
    assert m.center == (0.25, 0.0)
    after_state, after_safety = m.grid()
    # columns are indexed by i (east); the surviving block shifts by one
    np.testing.assert_array_equal(after_state[:-1], before_state[1:])
    np.testing.assert_array_equal(after_safety[:-1], before_safety[1:])
    assert (after_state[-1] == CellState.UNKNOWN).all()


@given(st.integers(-8, 8), st.integers(-8, 8))
def test_scrolling_keeps_surviving_cells_bit_identical(di, dj):
    cfg = TraversabilityConfig(map_radius=6)
    rough = generate_terrain(2, TerrainParams(extent=30.0, rock_density=0.2))
    m = update_map(TraversabilityMap(cfg), capture_point_cloud(rough, Pose(), hazcam(depth_noise_sigma=0.0)),
                   Pose())
    cells = [(i, j, m.cell(i, j)) for i in range(-6, 7) for j in range(-6, 7)]
    m.recenter(di, dj)
    for i, j, c in cells:
        if abs(i - di) <= 6 and abs(j - dj) <= 6:
            assert m.cell(i, j) == c
        else:
            assert m.cell(i, j).state == CellState.UNKNOWN


def test_reobserved_features_are_not_stored_twice():
    m = TraversabilityMap()
    c = flat_cloud()
    update_map(m, c, Pose())
    n = m.point_count()
    update_map(m, c, Pose())
    assert m.point_count() == n


def test_map_matches_dense_oracle_on_rocky_terrain():
    t = generate_terrain(5, TerrainParams(extent=30.0, rock_density=0.1))
    m = TraversabilityMap()
    for x in np.arange(0.0, 6.0, 0.5):
        update_map(m, capture_point_cloud(t, Pose(x, 0.0), hazcam(depth_noise_sigma=0.0)), Pose(x, 0.0))
    agree = total = 0
    for i in range(8, 30):
        for j in range(-6, 7):
            c = m.cell(i, j)
            if c.state == CellState.UNKNOWN:
                continue
            total += 1
            o = oracle_assessment(t, i, j)
            agree += (c.state == CellState.IMPASSABLE) == (o.state == CellState.IMPASSABLE)
    assert total > 100
    assert agree / total > 0.9


def test_map_uses_estimate_for_binning():
    c = flat_cloud()
    a = update_map(TraversabilityMap(), c, Pose())
    b = update_map(TraversabilityMap(), c, Pose(1.0, 0.0))
    assert a.cell(8, 0).state == CellState.ASSESSED
    assert b.cell(12, 0).state == CellState.ASSESSED
    assert b.center == (1.0, 0.0)


def test_save_load_round_trip(tmp_path):
    m = update_map(TraversabilityMap(), flat_cloud(), Pose())
    m.save(tmp_path / "m.npz")
    r = TraversabilityMap.load(tmp_path / "m.npz")
    for g1, g2 in zip(m.grid(), r.grid()):
        np.testing.assert_array_equal(g1, g2)
    assert r.cfg == m.cfg and r.center == m.center


def test_mismatched_config_rejected():
    with pytest.raises(ParameterError):
        update_map(TraversabilityMap(), flat_cloud(), Pose(), TraversabilityConfig(cell_size=0.5))
