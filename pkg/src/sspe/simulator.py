"""Synthetic correspondence simulator.

Stands in for a learned correspondence estimator: given a ground-truth pose
it renders per-keypoint direction-vector samples over the object's pixel
support (convex hull of the projected model points, rasterized at 1 px),
with configurable occlusion, direction noise, and outliers, and reads/writes
JSONL datasets of such scenes.

Randomness is fully determined by ``(master_seed, scene_id)``: every scene
uses ``default_rng(SeedSequence(entropy=master_seed, spawn_key=(scene_id,)))``,
so generation order (or parallelism) cannot change the output.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from ._kernels import hull_lattice_mask
from .errors import ConfigError, OcclusionExhaustedError
from .geometry import CameraIntrinsics, Pose, project_points, quat_canonical, transform_points
from .models import Keypoints3D, ObjectModel, farthest_point_sampling, load_point_cloud


@dataclass(frozen=True)
class NoiseConfig:
    """Imperfection model for the simulated vector field."""

    angle_sigma: float = 0.0     # radians; Gaussian rotation of each direction
    outlier_rate: float = 0.0    # probability of replacing a direction entirely
    pixel_jitter: float = 0.0    # std-dev of sample-location noise, pixels

    def __post_init__(self):
        if self.angle_sigma < 0 or self.pixel_jitter < 0:
            raise ConfigError(f"noise sigmas must be >= 0: {self}")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ConfigError(f"outlier_rate must be in [0, 1]: {self.outlier_rate}")


@dataclass(frozen=True)
class OcclusionConfig:
    """Fraction range of object pixels removed by one random rectangle."""

    min_fraction: float = 0.0
    max_fraction: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.min_fraction <= self.max_fraction <= 1.0:
            raise ConfigError(f"need 0 <= min <= max <= 1: {self}")


@dataclass(frozen=True)
class CorrespondenceSet:
    """n groups of m direction samples plus the ground truth they were drawn from.

    ``samples[i, k] = [x, y, dx, dy]``: a pixel location and its predicted
    unit direction toward 2D keypoint i.
    """

    samples: np.ndarray          # (n, m, 4)
    keypoints2d_gt: np.ndarray   # (n, 2)
    pose_gt: Pose
    intrinsics: CameraIntrinsics
    keypoints3d: Keypoints3D

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", s)
        k2 = np.asarray(self.keypoints2d_gt, dtype=np.float64)
        object.__setattr__(self, "keypoints2d_gt", k2)
        if s.ndim != 3 or s.shape[2] != 4:
            raise ConfigError(f"samples must be (n, m, 4), got {s.shape}")
        n, m = s.shape[:2]
        if m % 2 != 0:
            raise ConfigError(f"m must be even for pairing, got {m}")
        if k2.shape != (n, 2) or self.keypoints3d.n != n:
            raise ConfigError("keypoint counts disagree across fields")
        reproj = project_points(
            self.intrinsics, transform_points(self.pose_gt, self.keypoints3d.points)
        )
        err = np.abs(reproj - k2).max()
        if err > 1e-9:
            raise ConfigError(f"keypoints2d_gt disagree with projected ground truth by {err:.3e}")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def m(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class SceneRecord:
    scene_id: int
    object_name: str
    cset: CorrespondenceSet
    occlusion_fraction: float

    def to_json(self) -> dict:
        c = self.cset
        return {
            "scene_id": int(self.scene_id),
            "object": self.object_name,
            "pose": c.pose_gt.to_json(),
            "intrinsics": c.intrinsics.as_array().tolist(),
            "kps3d": c.keypoints3d.points.tolist(),
            "kps2d": c.keypoints2d_gt.tolist(),
            "occlusion_fraction": float(self.occlusion_fraction),
            "samples": c.samples.tolist(),
        }

    @staticmethod
    def from_json(d: dict) -> "SceneRecord":
        kps3d = Keypoints3D(
            points=np.array(d["kps3d"], dtype=np.float64), model_name=d["object"]
        )
        cset = CorrespondenceSet(
            samples=np.array(d["samples"], dtype=np.float64),
            keypoints2d_gt=np.array(d["kps2d"], dtype=np.float64),
            pose_gt=Pose.from_json(d["pose"]),
            intrinsics=CameraIntrinsics.from_array(d["intrinsics"]),
            keypoints3d=kps3d,
        )
        return SceneRecord(
            scene_id=int(d["scene_id"]),
            object_name=d["object"],
            cset=cset,
            occlusion_fraction=float(d["occlusion_fraction"]),
        )


def _convex_hull_ccw(pts: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; returns hull vertices in CCW order."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    p = pts[order]

    def half(chain_pts):
        chain = []
        for q in chain_pts:
            while len(chain) >= 2:
                ox, oy = chain[-2]
                ax, ay = chain[-1]
                if (ax - ox) * (q[1] - oy) - (ay - oy) * (q[0] - ox) <= 0:
                    chain.pop()
                else:
                    break
            chain.append((q[0], q[1]))
        return chain

    lower = half(p)
    upper = half(p[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        # collinear projections degenerate to a segment; keep endpoints
        hull = [tuple(p[0]), tuple(p[-1])]
    return np.array(hull, dtype=np.float64)


def _object_region_pixels(kps2d_all: np.ndarray) -> np.ndarray:
    """Integer lattice points inside the convex hull of the projected points, (N, 2)."""
    hull = _convex_hull_ccw(kps2d_all)
    x0 = int(math.floor(hull[:, 0].min()))
    y0 = int(math.floor(hull[:, 1].min()))
    x1 = int(math.ceil(hull[:, 0].max()))
    y1 = int(math.ceil(hull[:, 1].max()))
    mask = hull_lattice_mask(hull, x0, y0, x1 - x0 + 1, y1 - y0 + 1)
    rows, cols = np.nonzero(mask)
    return np.stack([x0 + cols, y0 + rows], axis=1).astype(np.float64)


def _apply_occlusion(pixels: np.ndarray, occ: OcclusionConfig, rng) -> tuple:
    """Remove one axis-aligned rectangle of pixels; returns (remaining, drawn fraction)."""
    fraction = float(rng.uniform(occ.min_fraction, occ.max_fraction))
    N = pixels.shape[0]
    k = int(round(fraction * N))
    if k < 1:
        return pixels, fraction
    center = pixels[int(rng.integers(N))]
    aspect = float(np.exp(rng.uniform(-np.log(2.0), np.log(2.0))))
    # rectangle = sublevel set of an anisotropic Chebyshev radius around the
    # center; thresholding at the k-th smallest radius removes ~k pixels
    keys = np.maximum(
        np.abs(pixels[:, 0] - center[0]) / aspect,
        np.abs(pixels[:, 1] - center[1]) * aspect,
    )
    thresh = np.partition(keys, k - 1)[k - 1]
    return pixels[keys > thresh], fraction


def render_correspondences(
    model: ObjectModel,
    kps: Keypoints3D,
    pose: Pose,
    K: CameraIntrinsics,
    m: int,
    noise: NoiseConfig,
    occ: OcclusionConfig,
    seed,
) -> CorrespondenceSet:
    """Render one scene's noisy direction-vector groups for each keypoint.

    Sampling is uniform without replacement over the unoccluded object-region
    pixels, independently per keypoint. Directions are unit vectors from the
    (jittered) sample location toward the true 2D keypoint, rotated by
    Gaussian angle noise and replaced by a random unit vector with probability
    ``outlier_rate``.
    """
    if m < 2 or m % 2 != 0:
        raise ConfigError(f"m must be even and >= 2, got {m}")
    rng = np.random.default_rng(seed)

    pts_cam = transform_points(pose, model.points)
    proj_all = project_points(K, pts_cam)                   # raises BehindCameraError
    kps2d = project_points(K, transform_points(pose, kps.points))

    pixels = _object_region_pixels(proj_all)
    pixels, _ = _apply_occlusion(pixels, occ, rng)
    if pixels.shape[0] < m:
        raise OcclusionExhaustedError(
            f"only {pixels.shape[0]} unoccluded pixels remain, need m={m}"
        )

    n = kps.n
    samples = np.empty((n, m, 4), dtype=np.float64)
    for i in range(n):
        idx = rng.choice(pixels.shape[0], size=m, replace=False)
        loc = pixels[idx].copy()
        if noise.pixel_jitter > 0:
            loc += rng.normal(0.0, noise.pixel_jitter, size=(m, 2))
        d = kps2d[i] - loc
        dist = np.hypot(d[:, 0], d[:, 1])
        # a sample landing exactly on the keypoint keeps an arbitrary unit
        # direction; its ray still passes through the keypoint
        degenerate = dist <= 1e-12
        dist = np.where(degenerate, 1.0, dist)
        d = np.where(degenerate[:, None], np.array([1.0, 0.0]), d / dist[:, None])
        if noise.angle_sigma > 0:
            theta = rng.normal(0.0, noise.angle_sigma, size=m)
            c, s = np.cos(theta), np.sin(theta)
            d = np.stack([c * d[:, 0] - s * d[:, 1], s * d[:, 0] + c * d[:, 1]], axis=1)
        if noise.outlier_rate > 0:
            hit = rng.random(m) < noise.outlier_rate
            phi = rng.uniform(0.0, 2.0 * np.pi, size=m)
            d = np.where(hit[:, None], np.stack([np.cos(phi), np.sin(phi)], axis=1), d)
        samples[i, :, :2] = loc
        samples[i, :, 2:] = d

    return CorrespondenceSet(
        samples=samples,
        keypoints2d_gt=kps2d,
        pose_gt=pose,
        intrinsics=K,
        keypoints3d=kps,
    )


@dataclass(frozen=True)
class DatasetConfig:
    """Full recipe for a synthetic dataset; JSON-serializable for manifests."""

    model_path: str
    scenes: int
    seed: int
    n: int = 9
    m: int = 200
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    occ: OcclusionConfig = field(default_factory=OcclusionConfig)
    intrinsics: CameraIntrinsics = field(default_factory=lambda: CameraIntrinsics(600.0, 600.0, 320.0, 240.0))
    xy_extent: float = 0.06      # translation box half-extent, meters
    z_range: tuple = (0.4, 0.7)  # translation depth range, meters
    start_rule: str = "farthest-from-centroid"

    def __post_init__(self):
        if self.scenes < 1:
            raise ConfigError(f"need >= 1 scene, got {self.scenes}")
        if not 0 < self.z_range[0] <= self.z_range[1]:
            raise ConfigError(f"z_range must satisfy 0 < lo <= hi: {self.z_range}")

    def to_json(self) -> dict:
        return {
            "model_path": self.model_path,
            "scenes": self.scenes,
            "seed": self.seed,
            "n": self.n,
            "m": self.m,
            "noise": {
                "angle_sigma": self.noise.angle_sigma,
                "outlier_rate": self.noise.outlier_rate,
                "pixel_jitter": self.noise.pixel_jitter,
            },
            "occ": {"min_fraction": self.occ.min_fraction, "max_fraction": self.occ.max_fraction},
            "intrinsics": self.intrinsics.as_array().tolist(),
            "xy_extent": self.xy_extent,
            "z_range": list(self.z_range),
            "start_rule": self.start_rule,
        }

    @staticmethod
    def from_json(d: dict) -> "DatasetConfig":
        return DatasetConfig(
            model_path=d["model_path"],
            scenes=int(d["scenes"]),
            seed=int(d["seed"]),
            n=int(d.get("n", 9)),
            m=int(d.get("m", 200)),
            noise=NoiseConfig(**d.get("noise", {})),
            occ=OcclusionConfig(**d.get("occ", {})),
            intrinsics=CameraIntrinsics.from_array(d.get("intrinsics", [600, 600, 320, 240])),
            xy_extent=float(d.get("xy_extent", 0.06)),
            z_range=tuple(d.get("z_range", (0.4, 0.7))),
            start_rule=d.get("start_rule", "farthest-from-centroid"),
        )


def scene_rng(master_seed: int, scene_id: int) -> np.random.Generator:
    """Per-scene generator; depends only on (master seed, scene id)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(scene_id,)))


def sample_pose(cfg: DatasetConfig, rng) -> Pose:
    """Rotation uniform over SO(3) (normalized 4D Gaussian), translation uniform in the box."""
    q = rng.standard_normal(4)
    q = quat_canonical(q / np.linalg.norm(q))
    t = np.array(
        [
            rng.uniform(-cfg.xy_extent, cfg.xy_extent),
            rng.uniform(-cfg.xy_extent, cfg.xy_extent),
            rng.uniform(cfg.z_range[0], cfg.z_range[1]),
        ]
    )
    return Pose(q, t)


def generate_scene(cfg: DatasetConfig, model: ObjectModel, kps: Keypoints3D, scene_id: int) -> SceneRecord:
    rng = scene_rng(cfg.seed, scene_id)
    pose = sample_pose(cfg, rng)
    fraction = float(rng.uniform(cfg.occ.min_fraction, cfg.occ.max_fraction))
    cset = render_correspondences(
        model, kps, pose, cfg.intrinsics, cfg.m,
        cfg.noise, OcclusionConfig(fraction, fraction), rng,
    )
    return SceneRecord(scene_id=scene_id, object_name=model.name, cset=cset, occlusion_fraction=fraction)


def generate_dataset(cfg: DatasetConfig, out_path) -> int:
    """Write a JSONL dataset of simulated scenes; returns the number written."""
    model = load_point_cloud(cfg.model_path)
    kps = farthest_point_sampling(model, cfg.n, cfg.start_rule)
    records = (generate_scene(cfg, model, kps, sid) for sid in range(cfg.scenes))
    return jsonio.write_jsonl((r.to_json() for r in records), out_path)


def read_dataset(path) -> list:
    """Load a JSONL dataset back into SceneRecords."""
    return [SceneRecord.from_json(d) for d in jsonio.read_jsonl(path)]
