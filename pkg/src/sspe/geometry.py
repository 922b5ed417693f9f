"""Quaternion algebra, rigid transforms, pinhole projection, 2D ray intersection.

Conventions, fixed across the toolkit:

* quaternions are ``(w, x, y, z)`` with ``w`` the scalar part, Hamilton product;
* stored/canonical quaternions have their first nonzero component positive
  (``q`` and ``-q`` encode the same rotation);
* everything is float64 -- gradient checks downstream need the headroom.

All functions are pure and reentrant.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, DegenerateQuaternionError, ParallelLinesError

_EPS_NORM = 1e-12
_EPS_Z = 1e-9
_EPS_PARALLEL = 1e-9


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Scale a quaternion to unit norm, preserving direction."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
    norm = np.linalg.norm(q)
    if norm <= _EPS_NORM:
        raise DegenerateQuaternionError(f"quaternion norm {norm:.3e} too small to normalize")
    return q / norm


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Flip sign so the first nonzero component is positive (w >= 0 normally)."""
    q = np.asarray(q, dtype=np.float64)
    for c in q:
        if c > 0.0:
            return q.copy()
        if c < 0.0:
            return -q
    raise DegenerateQuaternionError("zero quaternion has no canonical form")


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b."""
    w1, x1, y1, z1 = np.asarray(a, dtype=np.float64)
    w2, x2, y2, z2 = np.asarray(b, dtype=np.float64)
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion.

    Raises if the input is not unit norm (within 1e-9); callers that hold raw
    network output must normalize first.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > 1e-9:
        raise DegenerateQuaternionError(f"quat_to_rotmat requires unit norm, got {norm!r}")
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_rotmat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (canonical sign) of a rotation matrix.

    Shepperd-style branch selection on the largest diagonal combination keeps
    the division well conditioned for every rotation.
    """
    R = np.asarray(R, dtype=np.float64)
    t = np.trace(R)
    if t > R[0, 0] and t > R[1, 1] and t > R[2, 2]:
        s = np.sqrt(1.0 + t) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    return quat_canonical(quat_normalize(q))


def rotmat_from_axis_angle(w: np.ndarray) -> np.ndarray:
    """Rodrigues exponential map of an axis-angle 3-vector."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    K = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    if theta < 1e-12:
        # second-order series; exact enough below the float64 noise floor
        return np.eye(3) + K + 0.5 * (K @ K)
    return np.eye(3) + (np.sin(theta) / theta) * K + ((1 - np.cos(theta)) / theta**2) * (K @ K)


@dataclass(frozen=True)
class Pose:
    """Rigid transform: unit quaternion ``q`` (w,x,y,z) plus translation ``t`` meters."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64))
        if self.q.shape != (4,) or self.t.shape != (3,):
            raise ValueError(f"Pose needs q (4,) and t (3,), got {self.q.shape}, {self.t.shape}")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    def rotmat(self) -> np.ndarray:
        return quat_to_rotmat(self.q)

    def inverse(self) -> "Pose":
        R = self.rotmat()
        q_inv = quat_canonical(self.q * np.array([1.0, -1.0, -1.0, -1.0]))
        return Pose(q_inv, -R.T @ self.t)

    def to_json(self) -> dict:
        return {"q": quat_canonical(self.q).tolist(), "t": self.t.tolist()}

    @staticmethod
    def from_json(d: dict) -> "Pose":
        return Pose(np.array(d["q"], dtype=np.float64), np.array(d["t"], dtype=np.float64))


def transform_point(pose: Pose, p: np.ndarray) -> np.ndarray:
    """R p + t for a single 3-vector."""
    return pose.rotmat() @ np.asarray(p, dtype=np.float64) + pose.t


def transform_points(pose: Pose, pts: np.ndarray) -> np.ndarray:
    """R p + t applied row-wise to an (N, 3) array."""
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ pose.rotmat().T + pose.t


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy], dtype=np.float64)

    @staticmethod
    def from_array(a) -> "CameraIntrinsics":
        fx, fy, cx, cy = (float(v) for v in a)
        return CameraIntrinsics(fx, fy, cx, cy)


def project(K: CameraIntrinsics, p_cam: np.ndarray) -> np.ndarray:
    """Project a camera-frame point to pixels; the point must be in front of the camera."""
    p_cam = np.asarray(p_cam, dtype=np.float64)
    z = p_cam[2]
    if z <= _EPS_Z:
        raise BehindCameraError(f"point has Z={z:.3e}, must be > {_EPS_Z}")
    return np.array([K.fx * p_cam[0] / z + K.cx, K.fy * p_cam[1] / z + K.cy])


def project_points(K: CameraIntrinsics, pts_cam: np.ndarray) -> np.ndarray:
    """Project (N, 3) camera-frame points to (N, 2) pixels."""
    pts_cam = np.asarray(pts_cam, dtype=np.float64)
    z = pts_cam[:, 2]
    if np.any(z <= _EPS_Z):
        raise BehindCameraError(f"point has Z={z.min():.3e}, must be > {_EPS_Z}")
    return np.stack([K.fx * pts_cam[:, 0] / z + K.cx, K.fy * pts_cam[:, 1] / z + K.cy], axis=1)


def _renormalize_dir(d: np.ndarray) -> np.ndarray:
    n = np.hypot(d[0], d[1])
    if n <= _EPS_NORM:
        raise ParallelLinesError("zero-length direction vector")
    return d / n


def line_intersection(a, b) -> np.ndarray:
    """Intersection of two pixel-space rays given as 4-vectors ``[x, y, dx, dy]``.

    Directions are renormalized internally, so externally loaded samples need
    not be unit norm. Raises :class:`ParallelLinesError` when the directions
    are (anti)parallel.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    pa, da = a[:2], _renormalize_dir(a[2:4])
    pb, db = b[:2], _renormalize_dir(b[2:4])
    cross = da[0] * db[1] - da[1] * db[0]
    if abs(cross) < _EPS_PARALLEL:
        raise ParallelLinesError(f"directions nearly parallel (cross={cross:.3e})")
    # pa + s*da = pb + r*db  =>  s = cross2d(pb - pa, db) / cross2d(da, db)
    diff = pb - pa
    s = (diff[0] * db[1] - diff[1] * db[0]) / cross
    return pa + s * da


def least_squares_intersection(points: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Point minimizing the summed squared distance to a set of 2D rays.

    Normal equations of the stacked line constraints: sum_i (I - d_i d_i^T) q
    = sum_i (I - d_i d_i^T) p_i with unit directions d_i.
    """
    points = np.asarray(points, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    norms = np.hypot(dirs[:, 0], dirs[:, 1])
    if np.any(norms <= _EPS_NORM):
        raise ParallelLinesError("zero-length direction vector")
    d = dirs / norms[:, None]
    k = points.shape[0]
    A = k * np.eye(2) - d.T @ d
    rhs = points.sum(axis=0) - d.T @ np.einsum("ij,ij->i", d, points)
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < _EPS_PARALLEL:
        raise ParallelLinesError("all ray directions identical; intersection underdetermined")
    return np.linalg.solve(A, rhs)
