"""Pose loss, cosine similarity, and online-mined triplet regularization.

The triplet term averages a hinge over every feature as anchor: positives
come from the anchor's own keypoint group, negatives from a different group,
resampled per step. For pairwise mode with m/2 features per group this is
the 2/(n*m)-normalized sum over all n*(m/2) anchors.
"""

import numpy as np

from .._kernels import triplet_terms
from ..errors import DegenerateFeatureError
from ..geometry import Pose, quat_to_rotmat, quat_normalize

_EPS_FEAT = 1e-12

MINING_STRATEGIES = ("uniform", "hardest-negative")


def cosine_similarity(f: np.ndarray, g: np.ndarray) -> float:
    """f.g / (|f||g|); raises on near-zero norms."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    nf = np.linalg.norm(f)
    ng = np.linalg.norm(g)
    if nf <= _EPS_FEAT or ng <= _EPS_FEAT:
        raise DegenerateFeatureError(f"feature norms too small: {nf:.3e}, {ng:.3e}")
    return float(f @ g / (nf * ng))


def _feature_array(features) -> np.ndarray:
    arr = getattr(features, "features", features)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"features must be (n, P, D), got shape {arr.shape}")
    return arr


def mine_triplets(n: int, P: int, mining: str, seed, features: np.ndarray = None) -> tuple:
    """Flat (positive, negative) index arrays for all n*P anchors.

    Anchor order is group-major: anchor a = i*P + h. Positives are drawn
    uniformly from the anchor's group excluding itself (or the anchor itself
    when P == 1); negatives come from a different group, uniformly or, for
    ``hardest-negative``, by maximum cosine similarity to the anchor.
    """
    if mining not in MINING_STRATEGIES:
        raise ValueError(f"unknown mining strategy {mining!r}, expected {MINING_STRATEGIES}")
    if n < 2:
        raise ValueError(f"triplet mining needs >= 2 keypoint groups, got {n}")
    rng = np.random.default_rng(seed)
    A = n * P
    anchors = np.arange(A, dtype=np.int64)
    groups = anchors // P
    within = anchors % P

    if P > 1:
        pos = groups * P + (within + 1 + rng.integers(0, P - 1, size=A)) % P
    else:
        pos = anchors.copy()  # degenerate single-feature group: positive = anchor

    if mining == "uniform":
        neg_group = (groups + 1 + rng.integers(0, n - 1, size=A)) % n
        neg = neg_group * P + rng.integers(0, P, size=A)
    else:
        if features is None:
            raise ValueError("hardest-negative mining needs the feature block")
        flat = features.reshape(A, -1)
        norms = np.linalg.norm(flat, axis=1)
        if norms.min() <= _EPS_FEAT:
            raise DegenerateFeatureError(f"feature norm {norms.min():.3e} too small")
        unit = flat / norms[:, None]
        sims = unit @ unit.T
        sims[groups[:, None] == groups[None, :]] = -np.inf
        neg = np.argmax(sims, axis=1).astype(np.int64)
    return pos, neg


def triplet_loss(features, alpha: float, mining: str = "uniform", seed=None) -> tuple:
    """Mean hinge term over all anchors; returns (L_t, per-anchor terms (n, P))."""
    feats = _feature_array(features)
    n, P, D = feats.shape
    flat = feats.reshape(n * P, D)
    norms = np.linalg.norm(flat, axis=1)
    if norms.min() <= _EPS_FEAT:
        raise DegenerateFeatureError(f"feature norm {norms.min():.3e} too small for cosine")
    pos, neg = mine_triplets(n, P, mining, seed, features=feats)
    terms, _, _ = triplet_terms(flat, pos, neg, float(alpha))
    return float(terms.mean()), terms.reshape(n, P)


def pose_loss(pose_pred: Pose, pose_gt: Pose, kps3d) -> float:
    """Mean 3D keypoint error between predicted and ground-truth transforms."""
    pts = np.asarray(getattr(kps3d, "points", kps3d), dtype=np.float64)
    R_pred = quat_to_rotmat(quat_normalize(pose_pred.q))
    R_gt = quat_to_rotmat(quat_normalize(pose_gt.q))
    diff = (pts @ R_pred.T + pose_pred.t) - (pts @ R_gt.T + pose_gt.t)
    return float(np.sqrt((diff * diff).sum(axis=1)).mean())


def total_loss(
    pose_pred: Pose,
    features,
    pose_gt: Pose,
    kps3d,
    cfg,
    seed=None,
    triplet_enabled: bool = True,
) -> float:
    """lambda_p * L_p + lambda_t * L_t (triplet term dropped when disabled)."""
    lp = pose_loss(pose_pred, pose_gt, kps3d)
    total = cfg.lambda_p * lp
    if triplet_enabled and cfg.lambda_t != 0.0:
        lt, _ = triplet_loss(features, cfg.alpha, cfg.mining, cfg.seed if seed is None else seed)
        total += cfg.lambda_t * lt
    return float(total)
