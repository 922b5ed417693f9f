import numpy as np
import pytest

from sspe.baseline import (
    KeypointEstimate,
    VotingConfig,
    estimate_pose_baseline,
    pnp_solve,
    refine_pose,
    reprojection_error,
    vote_keypoints,
)
from sspe.errors import (
    DegenerateConfigurationError,
    DegenerateGroupError,
    InsufficientCorrespondencesError,
    VotingFailedError,
)
from sspe.geometry import (
    Pose,
    project_points,
    quat_from_rotmat,
    quat_multiply,
    quat_to_rotmat,
    rotmat_from_axis_angle,
    transform_points,
)
from sspe.metrics import add_error
from sspe.models import farthest_point_sampling, model_diameter
from sspe.simulator import NoiseConfig, OcclusionConfig

from conftest import make_scene, random_pose


@pytest.fixture(scope="module")
def kps9(blob_model):
    return farthest_point_sampling(blob_model, 9)


class TestVoteKeypoints:
    def test_noise_free_exact(self, blob_model, kps9):
        cset = make_scene(blob_model, kps9, seed=1, m=20)
        estimates = vote_keypoints(cset, VotingConfig(), seed=0)
        for est in estimates:
            assert np.abs(est.position - cset.keypoints2d_gt[est.index]).max() < 1e-6
            assert est.inlier_count == cset.m

    def test_outliers_rejected(self, blob_model, kps9):
        worst = 0.0
        for seed in range(5):
            cset = make_scene(
                blob_model, kps9, seed=seed, m=100, noise=NoiseConfig(outlier_rate=0.3)
            )
            estimates = vote_keypoints(cset, VotingConfig(inlier_cos_threshold=0.999), seed=seed)
            for est in estimates:
                worst = max(worst, float(np.abs(est.position - cset.keypoints2d_gt[est.index]).max()))
        assert worst < 0.5

    def test_all_parallel_degenerate(self, blob_model, kps9, intrinsics):
        cset = make_scene(blob_model, kps9, seed=2, m=10)
        samples = cset.samples.copy()
        samples[:, :, 2] = 1.0
        samples[:, :, 3] = 0.0
        broken = type(cset)(
            samples=samples,
            keypoints2d_gt=cset.keypoints2d_gt,
            pose_gt=cset.pose_gt,
            intrinsics=cset.intrinsics,
            keypoints3d=cset.keypoints3d,
        )
        with pytest.raises(DegenerateGroupError):
            vote_keypoints(broken, VotingConfig(), seed=0)

    def test_min_inlier_fraction_failure(self, blob_model, kps9):
        cset = make_scene(blob_model, kps9, seed=3, m=60, noise=NoiseConfig(angle_sigma=0.5))
        with pytest.raises(VotingFailedError):
            vote_keypoints(cset, VotingConfig(inlier_cos_threshold=1.0 - 1e-12, min_inlier_fraction=0.9), seed=0)

    def test_deterministic(self, blob_model, kps9):
        cset = make_scene(blob_model, kps9, seed=4, m=40, noise=NoiseConfig(0.05, 0.1))
        a = vote_keypoints(cset, VotingConfig(), seed=5)
        b = vote_keypoints(cset, VotingConfig(), seed=5)
        assert all(np.array_equal(x.position, y.position) for x, y in zip(a, b))


class TestPnpSolve:
    def project_kps(self, kps, pose, K):
        return project_points(K, transform_points(pose, kps.points))

    def test_noise_free_recovery(self, blob_model, kps9, intrinsics):
        rng = np.random.default_rng(9)
        for _ in range(20):
            pose = random_pose(rng)
            kps2d = self.project_kps(kps9, pose, intrinsics)
            est = pnp_solve(kps2d, kps9, intrinsics)
            est = refine_pose(est, kps2d, kps9, intrinsics)
            R_err = quat_to_rotmat(est.q).T @ quat_to_rotmat(pose.q)
            angle = np.arccos(np.clip((np.trace(R_err) - 1) / 2, -1, 1))
            assert angle < 1e-6
            assert np.abs(est.t - pose.t).max() < 1e-6

    def test_five_points_insufficient(self, blob_model, intrinsics):
        kps5 = farthest_point_sampling(blob_model, 5)
        pose = random_pose(np.random.default_rng(1))
        kps2d = self.project_kps(kps5, pose, intrinsics)
        with pytest.raises(InsufficientCorrespondencesError):
            pnp_solve(kps2d, kps5, intrinsics)

    def test_coplanar_degenerate(self, intrinsics):
        from sspe.models import Keypoints3D

        g = np.linspace(-0.05, 0.05, 3)
        pts = np.array([[x, y, 0.0] for x in g for y in g])
        kps = Keypoints3D(points=pts, model_name="plane")
        pose = Pose(np.array([1.0, 0, 0, 0]), np.array([0, 0, 0.5]))
        kps2d = project_points(intrinsics, transform_points(pose, pts))
        with pytest.raises(DegenerateConfigurationError):
            pnp_solve(kps2d, kps, intrinsics)


class TestRefinePose:
    def test_already_optimal_returns_input(self, blob_model, kps9, intrinsics):
        pose = random_pose(np.random.default_rng(2))
        kps2d = project_points(intrinsics, transform_points(pose, kps9.points))
        out = refine_pose(pose, kps2d, kps9, intrinsics)
        assert np.abs(out.t - pose.t).max() < 1e-12
        assert min(np.abs(out.q - pose.q).max(), np.abs(out.q + pose.q).max()) < 1e-12

    def test_converges_from_perturbation(self, blob_model, kps9, intrinsics):
        rng = np.random.default_rng(3)
        for _ in range(10):
            pose = random_pose(rng)
            kps2d = project_points(intrinsics, transform_points(pose, kps9.points))
            dq = quat_from_rotmat(rotmat_from_axis_angle(rng.standard_normal(3) * 0.05))
            pose0 = Pose(quat_multiply(dq, pose.q), pose.t + rng.standard_normal(3) * 0.02)
            out = refine_pose(pose0, kps2d, kps9, intrinsics)
            assert reprojection_error(out, kps2d, kps9, intrinsics) < 1e-6
            assert np.abs(out.t - pose.t).max() < 1e-6

    def test_behind_camera_start_rejected(self, blob_model, kps9, intrinsics):
        from sspe.errors import BehindCameraError

        pose = random_pose(np.random.default_rng(5))
        kps2d = project_points(intrinsics, transform_points(pose, kps9.points))
        behind = Pose(pose.q, np.array([0.0, 0.0, -1.0]))
        with pytest.raises(BehindCameraError):
            refine_pose(behind, kps2d, kps9, intrinsics)

    def test_cost_monotone_nonincreasing(self, blob_model, kps9, intrinsics):
        rng = np.random.default_rng(4)
        pose = random_pose(rng)
        kps2d = project_points(intrinsics, transform_points(pose, kps9.points))
        kps2d_noisy = kps2d + rng.normal(0, 2.0, kps2d.shape)
        costs = []
        current = Pose(np.array([1.0, 0, 0, 0]), np.array([0.0, 0.0, 0.5]))
        for _ in range(25):
            costs.append(reprojection_error(current, kps2d_noisy, kps9, intrinsics))
            current = refine_pose(current, kps2d_noisy, kps9, intrinsics, iters=1)
        assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))


class TestEstimatePoseBaseline:
    def test_noise_free_add_below_tolerance(self, blob_model, kps9):
        diam = model_diameter(blob_model)
        for seed in range(10):
            cset = make_scene(blob_model, kps9, seed=seed, m=30)
            pose = estimate_pose_baseline(cset, VotingConfig(), seed=seed)
            assert add_error(pose, cset.pose_gt, blob_model) < 1e-6 * diam

    def test_failure_propagates(self, blob_model, kps9):
        cset = make_scene(blob_model, kps9, seed=6, m=60, noise=NoiseConfig(angle_sigma=0.5))
        with pytest.raises(VotingFailedError):
            estimate_pose_baseline(
                cset, VotingConfig(inlier_cos_threshold=1.0 - 1e-12, min_inlier_fraction=0.9), seed=0
            )

    def test_deterministic(self, blob_model, kps9):
        cset = make_scene(blob_model, kps9, seed=7, m=40, noise=NoiseConfig(0.02, 0.05))
        a = estimate_pose_baseline(cset, VotingConfig(), seed=3)
        b = estimate_pose_baseline(cset, VotingConfig(), seed=3)
        assert np.array_equal(a.q, b.q) and np.array_equal(a.t, b.t)

    def test_voting_error_decreases_with_inliers(self, blob_model, kps9):
        """More agreeing samples -> statistically tighter keypoint estimates."""
        errs = {m: [] for m in (10, 80)}
        for m in errs:
            for seed in range(8):
                cset = make_scene(
                    blob_model, kps9, seed=seed, m=m, noise=NoiseConfig(angle_sigma=0.05)
                )
                for est in vote_keypoints(cset, VotingConfig(inlier_cos_threshold=0.99), seed=seed):
                    errs[m].append(np.linalg.norm(est.position - cset.keypoints2d_gt[est.index]))
        assert np.mean(errs[80]) <= np.mean(errs[10])
