"""Desk-scale bundle adjustment: pinhole reprojection, analytic Jacobians, LM.

Camera parameters are world-to-camera: ``X_cam = R(omega) @ p + t`` with
``omega`` an axis-angle vector.  Residuals are ``observed - projected``.
The gauge is pinned by freezing one camera and one coordinate of one
landmark (the scale).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial.transform import Rotation

from .errors import BehindCameraError, NoProgressError, ParameterError


@dataclass(frozen=True)
class Intrinsics:
    focal: float = 500.0
    cu: float = 320.0
    cv: float = 240.0


@dataclass
class CameraPoseParam:
    rotation: np.ndarray  # axis-angle, |.| < pi
    translation: np.ndarray

    def as_vector(self):
        return np.concatenate([np.asarray(self.rotation, float), np.asarray(self.translation, float)])


@dataclass
class Landmark:
    position: np.ndarray


@dataclass(frozen=True)
class Observation:
    camera_index: int
    landmark_index: int
    pixel: tuple


@dataclass(frozen=True)
class Gauge:
    camera: int = 0
    landmark: int = 0
    axis: int = 2


@dataclass
class BAProblem:
    """Cameras (N, 6), landmarks (M, 3) and K pixel observations."""

    cameras: np.ndarray
    landmarks: np.ndarray
    obs_camera: np.ndarray
    obs_landmark: np.ndarray
    obs_pixel: np.ndarray
    intrinsics: Intrinsics = Intrinsics()
    gauge: Gauge = Gauge()

    def __post_init__(self):
        self.cameras = np.asarray(self.cameras, dtype=float).reshape(-1, 6)
        self.landmarks = np.asarray(self.landmarks, dtype=float).reshape(-1, 3)
        self.obs_camera = np.asarray(self.obs_camera, dtype=np.int64)
        self.obs_landmark = np.asarray(self.obs_landmark, dtype=np.int64)
        self.obs_pixel = np.asarray(self.obs_pixel, dtype=float).reshape(-1, 2)

    @classmethod
    def from_lists(cls, cameras: Sequence[CameraPoseParam], landmarks: Sequence[Landmark],
                   observations: Sequence[Observation], intrinsics=Intrinsics(), gauge=Gauge()):
        return cls(np.array([c.as_vector() for c in cameras]),
                   np.array([l.position for l in landmarks], dtype=float),
                   [o.camera_index for o in observations],
                   [o.landmark_index for o in observations],
                   [o.pixel for o in observations], intrinsics, gauge)

    @property
    def n_cameras(self):
        return len(self.cameras)

    @property
    def n_landmarks(self):
        return len(self.landmarks)

    @property
    def n_observations(self):
        return len(self.obs_camera)

    @property
    def n_params(self):
        return 6 * self.n_cameras + 3 * self.n_landmarks

    def camera(self, i) -> CameraPoseParam:
        return CameraPoseParam(self.cameras[i, :3].copy(), self.cameras[i, 3:].copy())

    def observations(self) -> List[Observation]:
        return [Observation(int(c), int(l), (float(u), float(v)))
                for c, l, (u, v) in zip(self.obs_camera, self.obs_landmark, self.obs_pixel)]

    def with_params(self, cameras, landmarks):
        return BAProblem(cameras, landmarks, self.obs_camera, self.obs_landmark,
                         self.obs_pixel, self.intrinsics, self.gauge)

    def free_mask(self):
        m = np.ones(self.n_params, dtype=bool)
        g = self.gauge
        m[6 * g.camera: 6 * g.camera + 6] = False
        m[6 * self.n_cameras + 3 * g.landmark + g.axis] = False
        return m

    def validate(self):
        N, M, K = self.n_cameras, self.n_landmarks, self.n_observations
        if N == 0 or M == 0:
            raise ParameterError("problem needs at least one camera and one landmark")
        if K == 0:
            raise ParameterError("problem has no observations")
        if self.obs_camera.min() < 0 or self.obs_camera.max() >= N:
            raise ParameterError("observation camera index out of range")
        if self.obs_landmark.min() < 0 or self.obs_landmark.max() >= M:
            raise ParameterError("observation landmark index out of range")
        pairs = self.obs_camera * M + self.obs_landmark
        if len(np.unique(pairs)) != K:
            raise ParameterError("duplicate (camera, landmark) observation")
        if len(np.unique(self.obs_camera)) != N or len(np.unique(self.obs_landmark)) != M:
            raise ParameterError("every camera and landmark needs an observation")
        g = self.gauge
        if not (0 <= g.camera < N and 0 <= g.landmark < M and 0 <= g.axis < 3):
            raise ParameterError("gauge indices out of range")
        n_comp, _ = sp.csgraph.connected_components(
            sp.coo_matrix((np.ones(K), (self.obs_camera, N + self.obs_landmark)),
                          shape=(N + M, N + M)), directed=False)
        if n_comp != 1:
            raise ParameterError("observation graph is not connected")
        if np.any(np.linalg.norm(self.cameras[:, :3], axis=1) >= math.pi):
            raise ParameterError("axis-angle magnitude must be < pi")


# -- rotations ---------------------------------------------------------------

def _skew(v):
    """(..., 3) -> (..., 3, 3) cross-product matrices."""
    z = np.zeros(v.shape[:-1])
    return np.stack([
        np.stack([z, -v[..., 2], v[..., 1]], -1),
        np.stack([v[..., 2], z, -v[..., 0]], -1),
        np.stack([-v[..., 1], v[..., 0], z], -1),
    ], -2)


def rodrigues(omega):
    """Axis-angle (..., 3) to rotation matrices (..., 3, 3)."""
    omega = np.asarray(omega, dtype=float)
    th = np.linalg.norm(omega, axis=-1)[..., None, None]
    K = _skew(omega)
    small = th < 1e-8
    ths = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th ** 2 / 6.0, np.sin(ths) / ths)
    b = np.where(small, 0.5 - th ** 2 / 24.0, (1.0 - np.cos(ths)) / ths ** 2)
    return np.eye(3) + a * K + b * (K @ K)


def _right_jacobian(omega):
    th = np.linalg.norm(omega, axis=-1)[..., None, None]
    K = _skew(omega)
    small = th < 1e-6
    ths = np.where(small, 1.0, th)
    a = np.where(small, 0.5 - th ** 2 / 24.0, (1.0 - np.cos(ths)) / ths ** 2)
    b = np.where(small, 1.0 / 6.0 - th ** 2 / 120.0, (ths - np.sin(ths)) / ths ** 3)
    return np.eye(3) - a * K + b * (K @ K)


def _normalize_rotvec(omega):
    th = np.linalg.norm(omega, axis=-1, keepdims=True)
    over = th >= math.pi
    if not over.any():
        return omega
    safe = np.where(th > 0, th, 1.0)
    return np.where(over, omega * (1.0 - 2.0 * math.pi / safe), omega)


# -- projection ----------------------------------------------------------------

def reproject(camera: CameraPoseParam, landmark, intrinsics: Intrinsics = Intrinsics()):
    """Pixel (u, v) of ``landmark`` in ``camera``; raises when behind the camera."""
    p = np.asarray(getattr(landmark, "position", landmark), dtype=float)
    X = rodrigues(np.asarray(camera.rotation, float)) @ p + np.asarray(camera.translation, float)
    if not X[2] > 0:
        raise BehindCameraError(f"landmark depth {X[2]:.3g} <= 0")
    f = intrinsics.focal
    return (f * X[0] / X[2] + intrinsics.cu, f * X[1] / X[2] + intrinsics.cv)


def _project(problem, cameras, landmarks):
    """Per-observation camera-frame points and pixels."""
    cam = cameras[problem.obs_camera]
    pts = landmarks[problem.obs_landmark]
    R = rodrigues(cam[:, :3])
    X = np.einsum("kij,kj->ki", R, pts) + cam[:, 3:]
    f = problem.intrinsics.focal
    Z = X[:, 2]
    valid = Z > 0
    Zs = np.where(valid, Z, 1.0)
    uv = np.column_stack([f * X[:, 0] / Zs + problem.intrinsics.cu,
                          f * X[:, 1] / Zs + problem.intrinsics.cv])
    return R, X, uv, valid


def ba_residuals(problem: BAProblem, cameras=None, landmarks=None):
    """Residuals (2K,) with behind-camera observations zeroed, and the valid mask."""
    cameras = problem.cameras if cameras is None else cameras
    landmarks = problem.landmarks if landmarks is None else landmarks
    _, _, uv, valid = _project(problem, cameras, landmarks)
    r = np.where(valid[:, None], problem.obs_pixel - uv, 0.0)
    return r.ravel(), valid


@dataclass
class Linearization:
    residuals: np.ndarray  # (2K,)
    jacobian: sp.csr_matrix  # (2K, 6N + 3M), d residual / d params
    camera_blocks: np.ndarray  # (K, 2, 6)
    landmark_blocks: np.ndarray  # (K, 2, 3)
    valid: np.ndarray  # (K,)
    excluded: int


def ba_residuals_and_jacobian(problem: BAProblem, cameras=None, landmarks=None) -> Linearization:
    """Residuals and block-sparse Jacobian; gauge-fixed columns are zero."""
    cameras = problem.cameras if cameras is None else cameras
    landmarks = problem.landmarks if landmarks is None else landmarks
    N, M, K = problem.n_cameras, problem.n_landmarks, problem.n_observations
    R, X, uv, valid = _project(problem, cameras, landmarks)
    f = problem.intrinsics.focal
    Z = np.where(valid, X[:, 2], 1.0)
    dproj = np.zeros((K, 2, 3))
    dproj[:, 0, 0] = f / Z
    dproj[:, 1, 1] = f / Z
    dproj[:, 0, 2] = -f * X[:, 0] / Z ** 2
    dproj[:, 1, 2] = -f * X[:, 1] / Z ** 2
    pts = landmarks[problem.obs_landmark]
    omega = cameras[problem.obs_camera, :3]
    dX_domega = -R @ _skew(pts) @ _right_jacobian(omega)
    Jc = np.empty((K, 2, 6))
    Jc[:, :, :3] = dproj @ dX_domega
    Jc[:, :, 3:] = dproj
    Jl = dproj @ R
    # residual = observed - projected
    Jc = -Jc
    Jl = -Jl
    Jc[~valid] = 0.0
    Jl[~valid] = 0.0
    free = problem.free_mask()
    cam_cols = 6 * problem.obs_camera[:, None] + np.arange(6)[None, :]
    lm_cols = 6 * N + 3 * problem.obs_landmark[:, None] + np.arange(3)[None, :]
    Jc = Jc * free[cam_cols][:, None, :]
    Jl = Jl * free[lm_cols][:, None, :]
    cols = np.concatenate([cam_cols, lm_cols], axis=1)  # (K, 9)
    data = np.concatenate([Jc, Jl], axis=2)  # (K, 2, 9)
    rows = np.arange(2 * K).reshape(K, 2)
    J = sp.csr_matrix((data.ravel(), (np.repeat(rows.ravel(), 9),
                                      np.repeat(cols[:, None, :], 2, axis=1).ravel())),
                      shape=(2 * K, 6 * N + 3 * M))
    r = np.where(valid[:, None], problem.obs_pixel - uv, 0.0).ravel()
    return Linearization(r, J, Jc, Jl, valid, int(K - valid.sum()))


def numeric_jacobian(problem: BAProblem, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of the residuals over all parameters (dense)."""
    N = problem.n_cameras
    x0 = np.concatenate([problem.cameras.ravel(), problem.landmarks.ravel()])
    J = np.zeros((2 * problem.n_observations, len(x0)))
    free = problem.free_mask()
    for k in np.nonzero(free)[0]:
        xp = x0.copy()
        xm = x0.copy()
        xp[k] += step
        xm[k] -= step
        rp, _ = ba_residuals(problem, xp[: 6 * N].reshape(N, 6), xp[6 * N:].reshape(-1, 3))
        rm, _ = ba_residuals(problem, xm[: 6 * N].reshape(N, 6), xm[6 * N:].reshape(-1, 3))
        J[:, k] = (rp - rm) / (2 * step)
    return J


# -- Levenberg-Marquardt ---------------------------------------------------------

@dataclass(frozen=True)
class LMConfig:
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    max_damping: float = 1e16
    max_iterations: int = 100
    cost_tolerance: float = 1e-12  # relative decrease that counts as converged
    cost_floor: float = 1e-20  # absolute cost treated as exact fit
    use_schur: bool = True


@dataclass
class BASolution:
    cameras: np.ndarray
    landmarks: np.ndarray
    final_cost: float
    iterations: int
    cost_trace: List[float]
    excluded: int = 0
    residual_evaluations: int = 0
    converged: bool = True

    def problem(self, template: BAProblem) -> BAProblem:
        return template.with_params(self.cameras, self.landmarks)


def _normal_blocks(problem, lin):
    """Block pieces of J^T J and J^T r (r-gradient convention: g = J^T r)."""
    N, M = problem.n_cameras, problem.n_landmarks
    Jc, Jl = lin.camera_blocks, lin.landmark_blocks
    r = lin.residuals.reshape(-1, 2)
    A = np.zeros((N, 6, 6))
    B = np.zeros((M, 3, 3))
    np.add.at(A, problem.obs_camera, np.einsum("kai,kaj->kij", Jc, Jc))
    np.add.at(B, problem.obs_landmark, np.einsum("kai,kaj->kij", Jl, Jl))
    W = np.einsum("kai,kaj->kij", Jc, Jl)  # (K, 6, 3)
    gc = np.zeros((N, 6))
    gl = np.zeros((M, 3))
    np.add.at(gc, problem.obs_camera, np.einsum("kai,ka->ki", Jc, r))
    np.add.at(gl, problem.obs_landmark, np.einsum("kai,ka->ki", Jl, r))
    return A, B, W, gc, gl


def _damp_blocks(A, B, lam, free_c, free_l):
    """Marquardt damping; fixed parameters get an identity row/column."""
    A = A.copy()
    B = B.copy()
    ia = np.arange(6)
    ib = np.arange(3)
    A[:, ia, ia] *= 1.0 + lam
    B[:, ib, ib] *= 1.0 + lam
    for blocks, free, n in ((A, free_c, 6), (B, free_l, 3)):
        fixed = ~free
        blocks[np.broadcast_to(fixed[:, :, None], blocks.shape)] = 0.0
        blocks[np.broadcast_to(fixed[:, None, :], blocks.shape)] = 0.0
        i, k = np.nonzero(fixed)
        blocks[i, k, k] = 1.0
        # guard exactly-zero diagonals of free but unobserved directions
        d = blocks[:, np.arange(n), np.arange(n)]
        bad = d <= 0.0
        if bad.any():
            i, k = np.nonzero(bad)
            blocks[i, k, k] = 1e-12
    return A, B


def _solve_dense(problem, lin, lam):
    N, M = problem.n_cameras, problem.n_landmarks
    free = problem.free_mask()
    A, B, W, gc, gl = _normal_blocks(problem, lin)
    A, B = _damp_blocks(A, B, lam, free[: 6 * N].reshape(N, 6), free[6 * N:].reshape(M, 3))
    n = 6 * N + 3 * M
    H = np.zeros((n, n))
    for i in range(N):
        H[6 * i: 6 * i + 6, 6 * i: 6 * i + 6] = A[i]
    for j in range(M):
        o = 6 * N + 3 * j
        H[o: o + 3, o: o + 3] = B[j]
    fc = free[: 6 * N].reshape(N, 6)
    fl = free[6 * N:].reshape(M, 3)
    Wm = W * fc[problem.obs_camera][:, :, None] * fl[problem.obs_landmark][:, None, :]
    rows = 6 * problem.obs_camera[:, None] + np.arange(6)
    cols = 6 * N + 3 * problem.obs_landmark[:, None] + np.arange(3)
    H[rows[:, :, None], cols[:, None, :]] += Wm
    H[cols[:, :, None], rows[:, None, :]] += np.transpose(Wm, (0, 2, 1))
    g = np.concatenate([gc.ravel(), gl.ravel()]) * free
    return np.linalg.solve(H, -g)


def _solve_schur(problem, lin, lam):
    N, M = problem.n_cameras, problem.n_landmarks
    free = problem.free_mask()
    fc = free[: 6 * N].reshape(N, 6)
    fl = free[6 * N:].reshape(M, 3)
    A, B, W, gc, gl = _normal_blocks(problem, lin)
    A, B = _damp_blocks(A, B, lam, fc, fl)
    W = W * fc[problem.obs_camera][:, :, None] * fl[problem.obs_landmark][:, None, :]
    gc = gc * fc
    gl = gl * fl
    Binv = np.linalg.inv(B)
    S = np.zeros((N, N, 6, 6))
    for i in range(N):
        S[i, i] = A[i]
    # S -= sum over landmarks of W_ij B_j^-1 W_kj^T for camera pairs sharing landmark j
    WB = np.einsum("kab,kbc->kac", W, Binv[problem.obs_landmark])  # (K, 6, 3)
    order = np.argsort(problem.obs_landmark, kind="stable")
    lm_sorted = problem.obs_landmark[order]
    starts = np.searchsorted(lm_sorted, np.arange(M))
    ends = np.searchsorted(lm_sorted, np.arange(M), side="right")
    for j in range(M):
        ks = order[starts[j]: ends[j]]
        if len(ks) == 0:
            continue
        cams = problem.obs_camera[ks]
        blk = np.einsum("pab,qcb->pqac", WB[ks], W[ks])
        np.add.at(S, (cams[:, None], cams[None, :]), -blk)
    rhs_c = -gc.copy()
    Bg = np.einsum("mab,mb->ma", Binv, gl)
    np.add.at(rhs_c, problem.obs_camera, np.einsum("kab,kb->ka", W, Bg[problem.obs_landmark]))
    Sd = S.transpose(0, 2, 1, 3).reshape(6 * N, 6 * N)
    dc = np.linalg.solve(Sd, rhs_c.ravel()).reshape(N, 6)
    rhs_l = -gl.copy()
    np.add.at(rhs_l, problem.obs_landmark,
              -np.einsum("kab,ka->kb", W, dc[problem.obs_camera]))
    dl = np.einsum("mab,mb->ma", Binv, rhs_l)
    return np.concatenate([dc.ravel(), dl.ravel()])


def _cost(r):
    return float(r @ r)


def ba_solve(problem: BAProblem, cfg: LMConfig = LMConfig()) -> BASolution:
    """Levenberg-Marquardt on the reprojection error.

    Cost is the plain sum of squared pixel residuals.  Steps that do not
    lower the cost are rejected and the damping raised; the run ends on the
    iteration cap, on a relative decrease below ``cost_tolerance``, on a cost
    below ``cost_floor`` or when the damping saturates.
    """
    problem.validate()
    N = problem.n_cameras
    cams = problem.cameras.copy()
    pts = problem.landmarks.copy()
    lin = ba_residuals_and_jacobian(problem, cams, pts)
    evals = 1
    cost = _cost(lin.residuals)
    trace = [cost]
    lam = cfg.initial_damping
    iterations = 0
    solver = _solve_schur if cfg.use_schur else _solve_dense
    converged = True
    while iterations < cfg.max_iterations and cost > cfg.cost_floor:
        accepted = False
        while not accepted:
            try:
                delta = solver(problem, lin, lam)
                ok = np.all(np.isfinite(delta))
            except np.linalg.LinAlgError:
                ok = False
            if ok:
                new_cams = cams + delta[: 6 * N].reshape(N, 6)
                new_cams[:, :3] = _normalize_rotvec(new_cams[:, :3])
                new_pts = pts + delta[6 * N:].reshape(-1, 3)
                r_new, _ = ba_residuals(problem, new_cams, new_pts)
                evals += 1
                new_cost = _cost(r_new)
                if new_cost < cost:
                    accepted = True
                    break
            lam *= cfg.damping_up
            if lam > cfg.max_damping:
                if not ok:
                    raise NoProgressError(
                        "normal equations unsolvable at maximum damping",
                        BASolution(cams, pts, cost, iterations, trace, lin.excluded, evals, False))
                break
        if not accepted:
            break
        rel = (cost - new_cost) / cost
        cams, pts, cost = new_cams, new_pts, new_cost
        trace.append(cost)
        iterations += 1
        lam = max(lam * cfg.damping_down, 1e-15)
        lin = ba_residuals_and_jacobian(problem, cams, pts)
        evals += 1
        if rel < cfg.cost_tolerance:
            break
    else:
        converged = cost <= cfg.cost_floor
    return BASolution(cams, pts, cost, iterations, trace, lin.excluded, evals, converged)


# -- synthetic scenes ------------------------------------------------------------

def look_at(center, target, up=(0.0, 0.0, 1.0)):
    """World-to-camera (omega, t) for a camera at ``center`` looking at ``target``."""
    center = np.asarray(center, float)
    z = np.asarray(target, float) - center
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.vstack([x, y, z])
    omega = Rotation.from_matrix(R).as_rotvec()
    return omega, -R @ center


def camera_centers(cameras):
    R = rodrigues(cameras[:, :3])
    return -np.einsum("nji,nj->ni", R, cameras[:, 3:])


def make_scene(n_cameras: int, n_landmarks: int, seed: int = 0,
               n_observations: Optional[int] = None, noise_sigma: float = 0.0,
               intrinsics: Intrinsics = Intrinsics()) -> BAProblem:
    """Ground-truth problem with cameras on an arc facing a cloud of landmarks."""
    if n_cameras < 2 or n_landmarks < 3:
        raise ParameterError("scene needs >= 2 cameras and >= 3 landmarks")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-3.0, 3.0, size=(n_landmarks, 3))
    cams = np.zeros((n_cameras, 6))
    span = math.radians(60.0)
    for i in range(n_cameras):
        a = -span / 2 + span * i / max(n_cameras - 1, 1)
        center = np.array([12.0 * math.sin(a), -12.0 * math.cos(a), 1.5 + 0.3 * math.sin(3 * a)])
        center += rng.normal(0.0, 0.2, 3)
        target = rng.normal(0.0, 0.3, 3)
        omega, t = look_at(center, target)
        cams[i, :3] = omega
        cams[i, 3:] = t
    full = n_cameras * n_landmarks
    if n_observations is None or n_observations >= full:
        oc, ol = np.meshgrid(np.arange(n_cameras), np.arange(n_landmarks), indexing="ij")
        oc, ol = oc.ravel(), ol.ravel()
    else:
        if n_observations < 2 * n_landmarks:
            raise ParameterError("need at least two observations per landmark")
        chosen = np.zeros((n_cameras, n_landmarks), dtype=bool)
        j = np.arange(n_landmarks)
        chosen[j % n_cameras, j] = True
        chosen[(j + 1) % n_cameras, j] = True
        rest = np.flatnonzero(~chosen.ravel())
        extra = rng.choice(rest, size=n_observations - int(chosen.sum()), replace=False)
        chosen.ravel()[extra] = True
        oc, ol = np.nonzero(chosen)
    prob = BAProblem(cams, pts, oc, ol, np.zeros((len(oc), 2)), intrinsics)
    _, _, uv, valid = _project(prob, cams, pts)
    if not valid.all():
        raise ParameterError("synthesized landmark behind a camera")
    if noise_sigma > 0:
        uv = uv + rng.normal(0.0, noise_sigma, uv.shape)
    c0 = camera_centers(cams[:1])[0]
    axis = int(np.argmax(np.abs(pts[0] - c0)))
    return BAProblem(cams, pts, oc, ol, uv, intrinsics, Gauge(0, 0, axis))


def perturb_problem(problem: BAProblem, seed: int, rotation: float = 0.05,
                    translation: float = 0.1, landmark: float = 0.1) -> BAProblem:
    """Move every free parameter block by the given magnitudes in random directions."""
    rng = np.random.default_rng(seed)

    def dirs(n):
        v = rng.normal(size=(n, 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    N, M = problem.n_cameras, problem.n_landmarks
    cams = problem.cameras.copy()
    pts = problem.landmarks.copy()
    cams[:, :3] += rotation * dirs(N)
    cams[:, 3:] += translation * dirs(N)
    pts += landmark * dirs(M)
    g = problem.gauge
    cams[g.camera] = problem.cameras[g.camera]
    pts[g.landmark, g.axis] = problem.landmarks[g.landmark, g.axis]
    return problem.with_params(cams, pts)


def rigid_transform_scene(problem: BAProblem, omega, t) -> BAProblem:
    """Apply the world motion ``p -> R p + t`` to landmarks and cameras."""
    R = rodrigues(np.asarray(omega, float))
    pts = problem.landmarks @ R.T + t
    Rc = rodrigues(problem.cameras[:, :3])
    newR = Rc @ R.T
    cams = np.zeros_like(problem.cameras)
    cams[:, :3] = Rotation.from_matrix(newR).as_rotvec()
    cams[:, 3:] = problem.cameras[:, 3:] - np.einsum("nij,j->ni", newR, t)
    return problem.with_params(cams, pts)


def similarity_align(src, dst):
    """Umeyama: (s, R, t) minimizing |s R src + t - dst|^2 over point rows."""
    ms, md = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - ms, dst - md
    U, S, Vt = np.linalg.svd(b.T @ a / len(src))
    D = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        D[2, 2] = -1
    R = U @ D @ Vt
    s = float(np.trace(np.diag(S) @ D) / (a * a).sum(axis=1).mean())
    return s, R, md - s * R @ ms


def gauge_aligned_error(solution: BASolution, truth: BAProblem) -> float:
    """Max landmark / camera-centre error after similarity alignment to truth."""
    c_sol = camera_centers(solution.cameras)
    c_true = camera_centers(truth.cameras)
    src = np.vstack([solution.landmarks, c_sol])
    dst = np.vstack([truth.landmarks, c_true])
    s, R, t = similarity_align(src, dst)
    aligned = (s * (R @ src.T)).T + t
    pos_err = float(np.abs(aligned - dst).max())
    Rs = rodrigues(solution.cameras[:, :3]) @ R.T
    Rt = rodrigues(truth.cameras[:, :3])
    rot_err = float(np.abs(Rs - Rt).max())
    return max(pos_err, rot_err)


def ba_benchmark(sizes, cfg: LMConfig = LMConfig(), seed: int = 0,
                 noise_sigma: float = 0.5) -> List[dict]:
    """Solve one perturbed synthetic scene per size and report cost and timing.

    ``sizes`` holds ``(cameras, landmarks)`` or ``(cameras, landmarks, observations)``.
    """
    rows = []
    for size in sizes:
        nc, nl = int(size[0]), int(size[1])
        no = int(size[2]) if len(size) > 2 and size[2] is not None else None
        truth = make_scene(nc, nl, seed=seed, n_observations=no, noise_sigma=noise_sigma)
        start = perturb_problem(truth, seed + 1)
        t0 = time.perf_counter()
        sol = ba_solve(start, cfg)
        wall = time.perf_counter() - t0
        rows.append(dict(cameras=nc, landmarks=nl, observations=truth.n_observations,
                         iterations=sol.iterations, wall_time=wall, final_cost=sol.final_cost,
                         residual_evals_per_iteration=truth.n_observations))
    return rows
