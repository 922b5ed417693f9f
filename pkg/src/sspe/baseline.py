"""Classical two-stage baseline: RANSAC intersection voting, then PnP.

Per keypoint, random sample pairs propose intersection hypotheses; each is
scored by how many sample directions point at it (direction-cosine test),
the best hypothesis keeps its inliers, and the estimate is refit as the
least-squares intersection of all inlier rays. The 2D keypoints then go
through a DLT PnP initialization and Levenberg-Marquardt reprojection
refinement.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import batch_line_intersections, hypothesis_inlier_counts, ray_inlier_mask
from .errors import (
    BehindCameraError,
    DegenerateConfigurationError,
    DegenerateGroupError,
    InsufficientCorrespondencesError,
    NumericalFailureError,
    VotingFailedError,
)
from .geometry import (
    CameraIntrinsics,
    Pose,
    least_squares_intersection,
    project_points,
    quat_from_rotmat,
    quat_to_rotmat,
    rotmat_from_axis_angle,
    transform_points,
)
from .models import Keypoints3D


@dataclass(frozen=True)
class VotingConfig:
    hypothesis_count: int = 128
    inlier_cos_threshold: float = 0.999
    min_inlier_fraction: float = 0.25

    def __post_init__(self):
        if self.hypothesis_count < 1:
            raise ValueError(f"hypothesis_count must be >= 1, got {self.hypothesis_count}")
        if not -1.0 <= self.inlier_cos_threshold <= 1.0:
            raise ValueError(f"inlier_cos_threshold must be in [-1, 1]: {self.inlier_cos_threshold}")
        if not 0.0 <= self.min_inlier_fraction <= 1.0:
            raise ValueError(f"min_inlier_fraction must be in [0, 1]: {self.min_inlier_fraction}")


@dataclass(frozen=True)
class KeypointEstimate:
    index: int
    position: np.ndarray  # (2,) pixels
    inlier_count: int


def _vote_single_group(samples: np.ndarray, cfg: VotingConfig, rng) -> tuple:
    """Best-hypothesis voting for one keypoint's (m, 4) samples."""
    m = samples.shape[0]
    pts = np.ascontiguousarray(samples[:, :2])
    dirs = samples[:, 2:4]
    norms = np.hypot(dirs[:, 0], dirs[:, 1])
    safe = np.where(norms > 1e-12, norms, 1.0)
    dirs = np.ascontiguousarray(dirs / safe[:, None])

    first = rng.integers(0, m, size=cfg.hypothesis_count)
    second = (first + 1 + rng.integers(0, m - 1, size=cfg.hypothesis_count)) % m
    hyps, ok = batch_line_intersections(pts[first], dirs[first], pts[second], dirs[second])
    if not np.any(ok):
        raise DegenerateGroupError("all sampled direction pairs are parallel")

    counts = hypothesis_inlier_counts(pts, dirs, np.ascontiguousarray(hyps), cfg.inlier_cos_threshold)
    counts = np.where(ok, counts, -1)
    best = int(np.argmax(counts))  # ties: lowest hypothesis index
    best_count = int(counts[best])
    if best_count < cfg.min_inlier_fraction * m:
        raise VotingFailedError(
            f"best hypothesis has {best_count}/{m} inliers, below fraction {cfg.min_inlier_fraction}"
        )
    mask = ray_inlier_mask(pts, dirs, hyps[best], cfg.inlier_cos_threshold)
    position = least_squares_intersection(pts[mask], dirs[mask])
    return position, int(mask.sum())


def vote_keypoints(cset, cfg: VotingConfig = VotingConfig(), seed=0) -> list:
    """RANSAC intersection voting per keypoint; returns n KeypointEstimates."""
    if cset.m < 2:
        raise DegenerateGroupError(f"voting needs m >= 2 samples, got {cset.m}")
    rng = np.random.default_rng(seed)
    estimates = []
    for i in range(cset.n):
        position, inliers = _vote_single_group(cset.samples[i], cfg, rng)
        estimates.append(KeypointEstimate(index=i, position=position, inlier_count=inliers))
    return estimates


def pnp_solve(kps2d: np.ndarray, kps3d, K: CameraIntrinsics) -> Pose:
    """DLT pose initialization from n >= 6 non-coplanar 2D-3D correspondences.

    The projection matrix is estimated in normalized image coordinates, its
    rotation block factored by orthogonal Procrustes, and the overall sign
    fixed so the points lie in front of the camera.
    """
    pts3d = np.asarray(getattr(kps3d, "points", kps3d), dtype=np.float64)
    kps2d = np.asarray(kps2d, dtype=np.float64)
    n = pts3d.shape[0]
    if n < 6:
        raise InsufficientCorrespondencesError(f"PnP needs >= 6 correspondences, got {n}")

    u = (kps2d[:, 0] - K.cx) / K.fx
    v = (kps2d[:, 1] - K.cy) / K.fy
    hom = np.concatenate([pts3d, np.ones((n, 1))], axis=1)
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = hom
    A[0::2, 8:12] = -u[:, None] * hom
    A[1::2, 4:8] = hom
    A[1::2, 8:12] = -v[:, None] * hom

    _, sv, Vt = np.linalg.svd(A)
    # exact data leaves a 1-dim null space; a second vanishing singular value
    # means the configuration (e.g. coplanar points) is degenerate
    if sv[-2] <= 1e-9 * sv[0]:
        raise DegenerateConfigurationError(
            f"rank-deficient PnP design matrix (sv ratio {sv[-2] / sv[0]:.3e})"
        )
    M = Vt[-1].reshape(3, 4)
    if np.linalg.det(M[:, :3]) < 0:
        M = -M

    U, S, Vt3 = np.linalg.svd(M[:, :3])
    det_uv = np.linalg.det(U @ Vt3)
    R = U @ np.diag([1.0, 1.0, det_uv]) @ Vt3
    scale = S.mean()
    if scale <= 0:
        raise DegenerateConfigurationError("zero-scale projection matrix")
    t = M[:, 3] / scale

    z = pts3d @ R.T[:, 2] + t[2]
    if np.mean(z) <= 0:
        raise BehindCameraError("PnP solution places points behind the camera")
    return Pose(quat_from_rotmat(R), t)


def _reprojection_residuals(R: np.ndarray, t: np.ndarray, pts3d, kps2d, K) -> np.ndarray:
    cam = pts3d @ R.T + t
    if np.any(cam[:, 2] <= 1e-9):
        raise BehindCameraError("point behind camera during refinement")
    proj = np.stack(
        [K.fx * cam[:, 0] / cam[:, 2] + K.cx, K.fy * cam[:, 1] / cam[:, 2] + K.cy], axis=1
    )
    return (proj - kps2d).ravel()


def refine_pose(
    pose0: Pose,
    kps2d: np.ndarray,
    kps3d,
    K: CameraIntrinsics,
    iters: int = 100,
) -> Pose:
    """Levenberg-Marquardt reprojection refinement over a 6-dim local pose.

    Rotation increments are left-multiplied axis-angle steps. Damping starts
    at 1e-3, x10 on a rejected step, /10 on acceptance; stops when the step
    norm drops below 1e-10. Accepted steps never increase the cost.
    """
    pts3d = np.asarray(getattr(kps3d, "points", kps3d), dtype=np.float64)
    kps2d = np.asarray(kps2d, dtype=np.float64)
    R = quat_to_rotmat(pose0.q)
    t = pose0.t.copy()

    r = _reprojection_residuals(R, t, pts3d, kps2d, K)
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise NumericalFailureError("non-finite reprojection cost at refinement start")

    lam = 1e-3
    for _ in range(iters):
        cam = pts3d @ R.T + t
        X, Y, Z = cam[:, 0], cam[:, 1], cam[:, 2]
        # d(projection)/d(camera point)
        Jc = np.zeros((pts3d.shape[0], 2, 3))
        Jc[:, 0, 0] = K.fx / Z
        Jc[:, 0, 2] = -K.fx * X / Z**2
        Jc[:, 1, 1] = K.fy / Z
        Jc[:, 1, 2] = -K.fy * Y / Z**2
        # camera point w.r.t. (axis-angle increment, translation): [-[p]x | I]
        Jw = np.zeros((pts3d.shape[0], 3, 6))
        Jw[:, 0, 1] = Z
        Jw[:, 0, 2] = -Y
        Jw[:, 1, 0] = -Z
        Jw[:, 1, 2] = X
        Jw[:, 2, 0] = Y
        Jw[:, 2, 1] = -X
        Jw[:, :, 3:] = np.eye(3)
        J = np.einsum("nij,njk->nik", Jc, Jw).reshape(-1, 6)

        g = J.T @ r
        H = J.T @ J
        accepted = False
        for _ in range(50):
            try:
                delta = np.linalg.solve(H + lam * np.eye(6), -g)
            except np.linalg.LinAlgError:
                raise NumericalFailureError("singular normal equations in refinement") from None
            if np.linalg.norm(delta) < 1e-10:
                return Pose(quat_from_rotmat(R), t)
            R_new = rotmat_from_axis_angle(delta[:3]) @ R
            t_new = t + delta[3:]
            try:
                r_new = _reprojection_residuals(R_new, t_new, pts3d, kps2d, K)
                cost_new = float(r_new @ r_new)
            except BehindCameraError:
                cost_new = np.inf
            if np.isfinite(cost_new) and cost_new < cost:
                R, t, r, cost = R_new, t_new, r_new, cost_new
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
            if lam > 1e12:
                break
        if not accepted:
            break
    return Pose(quat_from_rotmat(R), t)


def estimate_pose_baseline(cset, cfg: VotingConfig = VotingConfig(), seed=0) -> Pose:
    """vote_keypoints -> pnp_solve -> refine_pose on one correspondence set."""
    estimates = vote_keypoints(cset, cfg, seed)
    kps2d = np.stack([e.position for e in estimates])
    pose0 = pnp_solve(kps2d, cset.keypoints3d, cset.intrinsics)
    return refine_pose(pose0, kps2d, cset.keypoints3d, cset.intrinsics)


def reprojection_error(pose: Pose, kps2d: np.ndarray, kps3d, K: CameraIntrinsics) -> float:
    """RMS reprojection error in pixels (diagnostic)."""
    pts3d = np.asarray(getattr(kps3d, "points", kps3d), dtype=np.float64)
    proj = project_points(K, transform_points(pose, pts3d))
    return float(np.sqrt(((proj - np.asarray(kps2d)) ** 2).sum(axis=1).mean()))
