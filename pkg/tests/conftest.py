import numpy as np
import pytest

from sspe.geometry import CameraIntrinsics, Pose, quat_canonical
from sspe.models import ObjectModel, farthest_point_sampling
from sspe.simulator import (
    CorrespondenceSet,
    DatasetConfig,
    NoiseConfig,
    OcclusionConfig,
    generate_scene,
    render_correspondences,
)


def random_blob(seed=5, npts=40, scale=0.06) -> ObjectModel:
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((npts, 3))
    pts *= scale / np.abs(pts).max()
    return ObjectModel("blob", pts)


def random_unit_quat(rng) -> np.ndarray:
    q = rng.standard_normal(4)
    return quat_canonical(q / np.linalg.norm(q))


def random_pose(rng, xy=0.06, z=(0.4, 0.7)) -> Pose:
    return Pose(
        random_unit_quat(rng),
        np.array([rng.uniform(-xy, xy), rng.uniform(-xy, xy), rng.uniform(*z)]),
    )


def make_scene(
    model,
    kps,
    seed=0,
    m=16,
    noise=NoiseConfig(),
    occ=OcclusionConfig(),
    pose=None,
    K=CameraIntrinsics(600.0, 600.0, 320.0, 240.0),
) -> CorrespondenceSet:
    rng = np.random.default_rng(seed)
    if pose is None:
        pose = random_pose(rng)
    return render_correspondences(model, kps, pose, K, m, noise, occ, rng)


def make_dataset(model, n=9, m=16, scenes=8, seed=0, noise=NoiseConfig(), occ=OcclusionConfig()):
    cfg = DatasetConfig(model_path="", scenes=scenes, seed=seed, n=n, m=m, noise=noise, occ=occ)
    kps = farthest_point_sampling(model, n)
    return [generate_scene(cfg, model, kps, sid) for sid in range(scenes)]


@pytest.fixture(scope="session")
def blob_model():
    return random_blob()


@pytest.fixture(scope="session")
def intrinsics():
    return CameraIntrinsics(600.0, 600.0, 320.0, 240.0)
