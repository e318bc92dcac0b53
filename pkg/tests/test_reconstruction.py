import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from marsnav.errors import BehindCameraError, ParameterError
from marsnav.reconstruction import (BAProblem, CameraPoseParam, Gauge, Intrinsics, LMConfig, Landmark,
                                    Observation, ba_benchmark, ba_residuals, ba_residuals_and_jacobian,
                                    ba_solve, camera_centers, gauge_aligned_error, make_scene,
                                    numeric_jacobian, perturb_problem, reproject,
                                    rigid_transform_scene, rodrigues)
from marsnav.reconstruction import _solve_dense, _solve_schur

IDENT = CameraPoseParam(np.zeros(3), np.zeros(3))


def fd_jacobian(problem, step=1e-6):
    """Central differences written against the residual function only."""
    N = problem.n_cameras
    x0 = np.concatenate([problem.cameras.ravel(), problem.landmarks.ravel()])

    def res(x):
        return ba_residuals(problem, x[: 6 * N].reshape(N, 6), x[6 * N:].reshape(-1, 3))[0]

    cols = []
    for k in range(len(x0)):
        e = np.zeros_like(x0)
        e[k] = step
        cols.append((res(x0 + e) - res(x0 - e)) / (2 * step))
    J = np.column_stack(cols)
    J[:, ~problem.free_mask()] = 0.0
    return J


def max_rel_error(Ja, Jn):
    scale = np.maximum(np.abs(Jn), 1.0)
    return float(np.max(np.abs(Ja - Jn) / scale))


def kabsch_similarity_error(sol_pts, true_pts):
    """Independent alignment oracle: scale from spread, rotation from scipy."""
    a = sol_pts - sol_pts.mean(axis=0)
    b = true_pts - true_pts.mean(axis=0)
    s = math.sqrt((b * b).sum() / (a * a).sum())
    rot, _ = Rotation.align_vectors(b, s * a)
    return float(np.abs(rot.apply(s * a) - b).max())


# -- reprojection -------------------------------------------------------------

def test_reproject_examples():
    assert reproject(IDENT, Landmark(np.array([0.0, 0.0, 10.0]))) == (320.0, 240.0)
    assert reproject(IDENT, np.array([1.0, 0.0, 10.0])) == (370.0, 240.0)
    with pytest.raises(BehindCameraError):
        reproject(IDENT, np.array([1.0, 0.0, 0.0]))
    with pytest.raises(BehindCameraError):
        reproject(IDENT, np.array([1.0, 0.0, -3.0]))


def test_reproject_matches_scipy_rotation():
    rng = np.random.default_rng(1)
    for _ in range(200):
        omega = rng.normal(size=3)
        omega *= rng.uniform(0, 3.0) / np.linalg.norm(omega)
        t = rng.normal(size=3) + [0, 0, 20]
        p = rng.uniform(-3, 3, 3)
        X = Rotation.from_rotvec(omega).as_matrix() @ p + t
        u, v = reproject(CameraPoseParam(omega, t), p, Intrinsics(700.0, 10.0, 20.0))
        assert u == pytest.approx(700 * X[0] / X[2] + 10, abs=1e-9)
        assert v == pytest.approx(700 * X[1] / X[2] + 20, abs=1e-9)


def test_rodrigues_matches_scipy():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(50, 3))
    np.testing.assert_allclose(rodrigues(w), Rotation.from_rotvec(w).as_matrix(), atol=1e-13)
    np.testing.assert_allclose(rodrigues(np.zeros(3)), np.eye(3))
    np.testing.assert_allclose(rodrigues(np.array([1e-10, 0, 0])),
                               Rotation.from_rotvec([1e-10, 0, 0]).as_matrix(), atol=1e-15)


# -- problem ------------------------------------------------------------------

def small_problem():
    cams = [IDENT, CameraPoseParam(np.array([0.0, 0.1, 0.0]), np.array([-1.0, 0.0, 0.0]))]
    pts = [Landmark(np.array(p, float)) for p in ([0, 0, 10], [1, 1, 12], [-1, 0.5, 9])]
    obs = [Observation(c, l, (300.0, 200.0)) for c in range(2) for l in range(3)]
    return BAProblem.from_lists(cams, pts, obs)


def test_problem_round_trips_lists():
    p = small_problem()
    assert (p.n_cameras, p.n_landmarks, p.n_observations, p.n_params) == (2, 3, 6, 21)
    assert p.observations()[4] == Observation(1, 1, (300.0, 200.0))
    np.testing.assert_array_equal(p.camera(1).translation, [-1.0, 0.0, 0.0])
    p.validate()


@pytest.mark.parametrize("mutate, msg", [
    (lambda p: setattr(p, "obs_camera", np.array([0, 0, 0, 1, 1, 5])), "range"),
    (lambda p: setattr(p, "obs_landmark", np.array([0, 1, 1, 0, 1, 2])), "duplicate"),
    (lambda p: p.__init__(p.cameras, p.landmarks, [0, 0, 1, 1], [0, 1, 0, 1], np.zeros((4, 2)),
                          p.intrinsics, p.gauge), "every"),
    (lambda p: setattr(p, "gauge", Gauge(5, 0, 0)), "gauge"),
    (lambda p: p.cameras.__setitem__((1, slice(0, 3)), [3.5, 0.0, 0.0]), "pi"),
])
def test_problem_validation(mutate, msg):
    p = small_problem()
    mutate(p)
    with pytest.raises(ParameterError, match=msg):
        p.validate()


def test_disconnected_graph_rejected():
    cams = [IDENT] * 4
    pts = [Landmark(np.array([0.0, 0.0, 10.0 + k])) for k in range(4)]
    obs = [Observation(0, 0, (0, 0)), Observation(1, 1, (0, 0)), Observation(0, 1, (0, 0)),
           Observation(2, 2, (0, 0)), Observation(3, 3, (0, 0)), Observation(2, 3, (0, 0))]
    with pytest.raises(ParameterError, match="connected"):
        BAProblem.from_lists(cams, pts, obs).validate()


# -- residuals and Jacobian ---------------------------------------------------

def test_exact_observations_give_zero_residuals():
    truth = make_scene(4, 20, seed=3)
    r, valid = ba_residuals(truth)
    assert valid.all() and np.abs(r).max() < 1e-9


def test_residual_sign_is_observed_minus_projected():
    p = small_problem()
    r, _ = ba_residuals(p)
    u, v = reproject(p.camera(0), p.landmarks[0])
    assert r[0] == pytest.approx(300.0 - u) and r[1] == pytest.approx(200.0 - v)


def test_jacobian_three_cameras_ten_landmarks():
    prob = perturb_problem(make_scene(3, 10, seed=11), seed=12)
    lin = ba_residuals_and_jacobian(prob)
    Ja = lin.jacobian.toarray()
    assert max_rel_error(Ja, fd_jacobian(prob)) < 1e-5
    np.testing.assert_allclose(Ja, numeric_jacobian(prob), atol=1e-4)


def test_gauge_columns_are_zero_and_sparsity_is_blockwise():
    prob = perturb_problem(make_scene(3, 10, seed=4), seed=5)
    J = ba_residuals_and_jacobian(prob).jacobian.toarray()
    assert not J[:, ~prob.free_mask()].any()
    assert (~prob.free_mask()).sum() == 7
    for k, (c, l) in enumerate(zip(prob.obs_camera, prob.obs_landmark)):
        row = J[2 * k: 2 * k + 2]
        allowed = np.zeros(J.shape[1], dtype=bool)
        allowed[6 * c: 6 * c + 6] = True
        allowed[18 + 3 * l: 18 + 3 * l + 3] = True
        assert not row[:, ~allowed].any()


def test_behind_camera_observation_excluded():
    prob = make_scene(3, 10, seed=6)
    pts = prob.landmarks.copy()
    cams = prob.cameras.copy()
    # push landmark 3 behind camera 1 by mirroring it through the camera centre
    c1 = camera_centers(cams[1:2])[0]
    pts[3] = c1 - 0.5 * (pts[3] - c1)
    lin = ba_residuals_and_jacobian(prob, cams, pts)
    assert lin.excluded >= 1
    bad = ~lin.valid
    assert not lin.camera_blocks[bad].any() and not lin.landmark_blocks[bad].any()
    assert not lin.residuals.reshape(-1, 2)[bad].any()


# -- solver -------------------------------------------------------------------

def test_truth_initialisation_converges_immediately():
    sol = ba_solve(make_scene(5, 30, seed=1))
    assert sol.iterations <= 1 and sol.final_cost < 1e-18


def test_perturbed_noiseless_recovers_truth():
    for seed in range(3):
        truth = make_scene(5, 40, seed=seed)
        sol = ba_solve(perturb_problem(truth, seed + 100))
        assert gauge_aligned_error(sol, truth) < 1e-6
        assert kabsch_similarity_error(sol.landmarks, truth.landmarks) < 1e-6
        assert all(b <= a for a, b in zip(sol.cost_trace, sol.cost_trace[1:]))


def test_noisy_final_rms_matches_noise_level():
    sigma = 1.0
    ratios = []
    for seed in range(5):
        truth = make_scene(10, 100, seed=seed, noise_sigma=sigma)
        sol = ba_solve(perturb_problem(truth, seed + 7))
        assert all(b <= a for a, b in zip(sol.cost_trace, sol.cost_trace[1:]))
        m = 2 * truth.n_observations
        p = int(truth.free_mask().sum())
        expected = sigma * math.sqrt((m - p) / m)
        ratios.append(math.sqrt(sol.final_cost / m) / expected)
    assert all(0.8 <= r <= 1.2 for r in ratios), ratios


def test_schur_and_dense_solve_the_same_system():
    truth = make_scene(6, 40, seed=9, noise_sigma=0.5)
    start = perturb_problem(truth, 10)
    lin = ba_residuals_and_jacobian(start)
    for lam in (1e-6, 1e-3, 1.0, 1e3):
        dense = _solve_dense(start, lin, lam)
        schur = _solve_schur(start, lin, lam)
        np.testing.assert_allclose(schur, dense, rtol=1e-8, atol=1e-10 * np.abs(dense).max())


def test_schur_and_dense_accept_the_same_steps():
    truth = make_scene(6, 40, seed=9, noise_sigma=0.5)
    start = perturb_problem(truth, 10)
    a = ba_solve(start, LMConfig(use_schur=True))
    b = ba_solve(start, LMConfig(use_schur=False))
    final = min(a.final_cost, b.final_cost)
    assert a.final_cost == pytest.approx(b.final_cost, rel=1e-10)
    # identical until both reach the round-off floor of the converged cost
    n = next(k for k, c in enumerate(a.cost_trace) if c - final < 1e-9 * final)
    np.testing.assert_allclose(a.cost_trace[:n + 1], b.cost_trace[:n + 1], rtol=1e-9)


def test_gauge_independence():
    truth = make_scene(6, 40, seed=13, noise_sigma=1.0)
    moved = rigid_transform_scene(truth, [0.3, -0.2, 0.5], [2.0, -1.0, 0.5])
    # pixels are invariant under a rigid motion of the whole scene
    np.testing.assert_allclose(ba_residuals(moved)[0], ba_residuals(truth)[0], atol=1e-8)
    a = ba_solve(truth)
    b = ba_solve(moved)
    assert a.final_cost == pytest.approx(b.final_cost, rel=1e-9, abs=1e-9)


def test_iteration_cap_respected():
    truth = make_scene(5, 30, seed=2, noise_sigma=0.5)
    sol = ba_solve(perturb_problem(truth, 3), LMConfig(max_iterations=2))
    assert sol.iterations == 2 and len(sol.cost_trace) == 3


def test_invalid_problem_rejected_before_solving():
    p = small_problem()
    p.obs_camera = np.array([0, 0, 0, 0, 0, 0])
    with pytest.raises(ParameterError):
        ba_solve(p)


# -- scenes and benchmark ----------------------------------------------------

def test_make_scene_observation_budget():
    s = make_scene(5, 30, seed=0, n_observations=80)
    assert s.n_observations == 80
    s.validate()
    with pytest.raises(ParameterError):
        make_scene(5, 30, n_observations=40)
    with pytest.raises(ParameterError):
        make_scene(1, 30)


def test_benchmark_empty_and_duplicates():
    assert ba_benchmark([]) == []
    rows = ba_benchmark([(4, 20), (4, 20)])
    assert rows[0]["final_cost"] == rows[1]["final_cost"]
    assert rows[0]["iterations"] == rows[1]["iterations"]


def test_benchmark_evaluation_counts_grow_with_size():
    rows = ba_benchmark([(2, 10), (10, 100), (30, 500)], LMConfig(max_iterations=3))
    counts = [r["residual_evals_per_iteration"] for r in rows]
    assert counts == sorted(counts) and counts[0] < counts[-1]
    assert [r["observations"] for r in rows] == [20, 1000, 15000]
