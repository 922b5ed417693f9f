"""Finite-difference validation of the hand-derived gradients.

The objective is piecewise smooth (rectifiers, max aggregation, hinge), so a
central difference is only a derivative estimate when no kink falls inside
the +/-h interval. The checker detects kink crossings from the jump between
the two one-sided slopes; on those axes the analytic gradient must agree
with one of the one-sided slopes (subgradient-side consistency) instead.
Everywhere else the criterion tolerance of 1e-4 applies directly.
"""

import numpy as np
import pytest

from sspe.posehead import VARIANTS, Arch, TrainConfig, backward, forward, init_params, total_loss
from sspe.models import farthest_point_sampling
from sspe.simulator import NoiseConfig, OcclusionConfig

from conftest import make_scene

FD_STEP = 1e-5
REL_TOL = 1e-4
# a one-sided slope jump above this flags a kink inside the interval; it sits
# below REL_TOL so a near-threshold kink cannot leak a >1e-4 central-difference
# error into the smooth branch (|fd - an| <= jump/2 there); smooth axes with
# mild curvature that trip it instead face the (easier) one-sided check
KINK_JUMP = 1e-4
KINK_TOL = 1e-2       # one-sided slopes carry O(h * f'') truncation error
SCALE_FLOOR = 1e-3    # denominators below the FD noise floor count as matching
SMALL = dict(feat_dim=16, phi_s_hidden=(8, 8), phi_g_hidden=(12, 8))


def fd_gradient_report(variant_name: str, instance_seed: int, blob_model, n=3, m=8) -> tuple:
    """(worst smooth-axis rel error, kink axis count, worst kink-side deviation)."""
    variant = VARIANTS[variant_name]
    kps = farthest_point_sampling(blob_model, n)
    cset = make_scene(
        blob_model, kps, seed=instance_seed, m=m,
        noise=NoiseConfig(0.05, 0.1, 0.5), occ=OcclusionConfig(0.0, 0.3),
    )
    pose_gt = cset.pose_gt
    arch = Arch(n=n, m=m, **SMALL)
    params = init_params(arch, variant, seed=instance_seed)
    # condition the instance so the FD step measures derivatives rather than
    # curvature: the quaternion bias keeps |qraw| ~ 0.5 (normalization
    # truncation error ~ h^2/|qraw|^2), the feature bias keeps feature norms
    # away from the exact-zero dead-unit case
    params.phi_g[-1].b[0] = 0.5
    params.phi_s[-1].b[:] = 0.05
    cfg = TrainConfig(seed=0, alpha=0.1, lambda_p=0.01, lambda_t=0.1, epochs=1, batch_size=1)
    mining_seed = 1000 + instance_seed

    def loss():
        pose, block, _ = forward(params, cset)
        return total_loss(
            pose, block, pose_gt, kps, cfg, seed=mining_seed,
            triplet_enabled=variant.triplet_enabled,
        )

    _, _, cache = forward(params, cset)
    assert cache.qraw_norm[0] > 0.1, "instance too close to the normalization singularity"
    grads = backward(params, cset, pose_gt, cfg, cache, seed=mining_seed)
    l0 = loss()

    worst_smooth = 0.0
    kink_axes = 0
    worst_kink = 0.0
    for p_arr, g_arr in zip(params.arrays(), grads.arrays()):
        flat_p, flat_g = p_arr.ravel(), g_arr.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + FD_STEP
            lp = loss()
            flat_p[i] = orig - FD_STEP
            lm = loss()
            flat_p[i] = orig
            an = flat_g[i]
            slope_r = (lp - l0) / FD_STEP
            slope_l = (l0 - lm) / FD_STEP
            jump = abs(slope_r - slope_l)
            if jump > max(KINK_JUMP * max(abs(slope_l), abs(slope_r)), 1e-7):
                kink_axes += 1
                dev = min(abs(an - slope_l), abs(an - slope_r)) / max(
                    abs(slope_l), abs(slope_r), SCALE_FLOOR
                )
                worst_kink = max(worst_kink, dev)
            else:
                fd = (lp - lm) / (2 * FD_STEP)
                rel = abs(fd - an) / max(SCALE_FLOOR, abs(fd), abs(an))
                worst_smooth = max(worst_smooth, rel)
    return worst_smooth, kink_axes, worst_kink


def fd_worst_rel_error(variant_name: str, instance_seed: int, blob_model, n=3, m=8) -> float:
    """Worst smooth-axis relative error; asserts kink axes are side-consistent."""
    worst_smooth, kink_axes, worst_kink = fd_gradient_report(
        variant_name, instance_seed, blob_model, n=n, m=m
    )
    if kink_axes:
        assert worst_kink < KINK_TOL, (
            f"{variant_name} seed {instance_seed}: analytic gradient off both one-sided "
            f"slopes at a kink crossing ({worst_kink:.3e})"
        )
    return worst_smooth


@pytest.mark.parametrize("variant", sorted(VARIANTS))
def test_gradients_match_finite_differences(variant, blob_model):
    for seed in range(3):
        worst = fd_worst_rel_error(variant, seed, blob_model)
        assert worst < REL_TOL, f"{variant} seed {seed}: rel err {worst:.3e}"


def test_zero_coefficients_zero_gradients(blob_model):
    kps = farthest_point_sampling(blob_model, 3)
    cset = make_scene(blob_model, kps, seed=0, m=8)
    arch = Arch(n=3, m=8, **SMALL)
    params = init_params(arch, VARIANTS["sspe-ours"], seed=0)
    cfg = TrainConfig(seed=0, lambda_p=0.0, lambda_t=0.0, epochs=1, batch_size=1)
    _, _, cache = forward(params, cset)
    grads = backward(params, cset, cset.pose_gt, cfg, cache, seed=0)
    assert all(np.all(g == 0.0) for g in grads.arrays())


def test_inactive_hinge_ignores_negatives(blob_model):
    """With every hinge inactive, gradients match the pose-only objective exactly."""
    from types import SimpleNamespace

    kps = farthest_point_sampling(blob_model, 3)
    cset = make_scene(blob_model, kps, seed=1, m=8)
    arch = Arch(n=3, m=8, **SMALL)
    params = init_params(arch, VARIANTS["sspe-ours"], seed=1)

    cfg_pose_only = TrainConfig(seed=0, lambda_t=0.0, epochs=1, batch_size=1)
    _, _, cache = forward(params, cset)
    g_ref = backward(params, cset, cset.pose_gt, cfg_pose_only, cache, seed=7)

    # cosine similarities lie in [-1, 1], so S_neg - S_pos - 2.5 < 0 for every
    # anchor: the triplet branch is provably dead despite lambda_t > 0
    cfg_dead = SimpleNamespace(lambda_p=0.01, lambda_t=0.5, alpha=-2.5, mining="uniform", seed=0)
    _, _, cache2 = forward(params, cset)
    g_dead = backward(params, cset, cset.pose_gt, cfg_dead, cache2, seed=7)
    for a, b in zip(g_ref.arrays(), g_dead.arrays()):
        assert np.array_equal(a, b)


def test_gradient_check_hardest_negative_mining(blob_model):
    """Hardest mining is FD-checkable when no argmax flips near the point."""
    variant = VARIANTS["sspe-ours"]
    kps = farthest_point_sampling(blob_model, 3)
    cset = make_scene(blob_model, kps, seed=2, m=8, noise=NoiseConfig(0.05, 0.1, 0.5))
    arch = Arch(n=3, m=8, **SMALL)
    params = init_params(arch, variant, seed=2)
    cfg = TrainConfig(seed=0, mining="hardest-negative", epochs=1, batch_size=1)

    def loss():
        pose, block, _ = forward(params, cset)
        return total_loss(pose, block, cset.pose_gt, kps, cfg, seed=5)

    _, _, cache = forward(params, cset)
    grads = backward(params, cset, cset.pose_gt, cfg, cache, seed=5)
    rng = np.random.default_rng(0)
    worst = 0.0
    for p_arr, g_arr in zip(params.arrays(), grads.arrays()):
        flat_p, flat_g = p_arr.ravel(), g_arr.ravel()
        for i in rng.choice(flat_p.size, size=min(20, flat_p.size), replace=False):
            orig = flat_p[i]
            flat_p[i] = orig + FD_STEP
            lp = loss()
            flat_p[i] = orig - FD_STEP
            lm = loss()
            flat_p[i] = orig
            fd = (lp - lm) / (2 * FD_STEP)
            worst = max(worst, abs(fd - flat_g[i]) / max(1e-6, abs(fd), abs(flat_g[i])))
    assert worst < REL_TOL
