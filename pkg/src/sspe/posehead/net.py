"""Forward pass and hand-derived backward pass of the pose head.

The computation per scene: direction samples (optionally concatenated into
consecutive pairs) go through the shared MLP to give per-group features,
which are aggregated (mean or elementwise max), concatenated over keypoints,
and regressed to quaternion + translation by the second MLP. The quaternion
is normalized before rotation recovery.

Gradients are exact analytic derivatives of the combined objective,
including through the quaternion normalization, the aggregation (mean splits
uniformly; max routes to the argmax with lowest-index tie-break), the cosine
similarities, and the hinge (inactive at exactly zero margin). Internally
everything is batched over scenes; the public single-scene API wraps B=1.
"""

from dataclasses import dataclass, field

import numpy as np

from .._kernels import triplet_grad, triplet_terms
from ..errors import ConfigError, ContractViolationError, DegenerateQuaternionError, NumericalFailureError
from ..geometry import CameraIntrinsics, Pose, quat_to_rotmat
from .losses import mine_triplets
from .params import DenseLayer, PoseHeadParams

_EPS_QUAT = 1e-12


@dataclass(frozen=True)
class FeatureBlock:
    """Per-keypoint feature rows (n, P, D) plus the sample indices that formed them."""

    features: np.ndarray
    sample_indices: np.ndarray  # (n, P, 2) pairwise or (n, P, 1) single

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def per_group(self) -> int:
        return self.features.shape[1]


@dataclass
class Grads:
    """Parameter gradients, mirroring PoseHeadParams layer structure."""

    phi_s: list
    phi_g: list

    def arrays(self) -> list:
        out = []
        for layer in self.phi_s + self.phi_g:
            out.append(layer.W)
            out.append(layer.b)
        return out


@dataclass
class ForwardCache:
    """Activations retained for the backward pass; tied to (params, inputs)."""

    params: PoseHeadParams
    sources: tuple
    B: int
    n: int
    P: int
    s_acts: list
    s_pres: list
    feats: np.ndarray      # (B, n, P, D)
    max_idx: np.ndarray    # (B, n, D) argmax per feature dim, or None for mean
    g_acts: list
    g_pres: list
    raw: np.ndarray        # (B, 7)
    qraw_norm: np.ndarray  # (B,)
    qhat: np.ndarray       # (B, 4)
    that: np.ndarray       # (B, 3)


def _relu(x):
    return np.maximum(x, 0.0)


def mlp_forward(layers: list, X: np.ndarray) -> tuple:
    """Dense stack with rectifier hidden activations and a linear last layer.

    Returns (acts, pres): acts[0] is the input, acts[-1] the output.
    """
    acts = [X]
    pres = []
    last = len(layers) - 1
    for li, layer in enumerate(layers):
        Z = acts[-1] @ layer.W + layer.b
        pres.append(Z)
        acts.append(Z if li == last else _relu(Z))
    return acts, pres


def mlp_backward(layers: list, acts: list, pres: list, grad_out: np.ndarray) -> tuple:
    """Gradients of all layers plus the gradient w.r.t. the stack input."""
    grads = [None] * len(layers)
    g = grad_out
    last = len(layers) - 1
    for li in range(last, -1, -1):
        dpre = g if li == last else g * (pres[li] > 0)
        grads[li] = DenseLayer(W=acts[li].T @ dpre, b=dpre.sum(axis=0))
        g = dpre @ layers[li].W.T
    return grads, g


def build_inputs(samples: np.ndarray, K: CameraIntrinsics, feature_mode: str) -> np.ndarray:
    """MLP input rows from one scene's (n, m, 4) samples.

    Pixel coordinates are mapped to the normalized image plane via the
    intrinsics; directions are renormalized (externally loaded data may not
    be unit norm). Pairwise mode concatenates consecutive samples (2h, 2h+1).
    """
    n, m, _ = samples.shape
    u = np.empty_like(samples)
    u[:, :, 0] = (samples[:, :, 0] - K.cx) / K.fx
    u[:, :, 1] = (samples[:, :, 1] - K.cy) / K.fy
    d = samples[:, :, 2:4]
    norm = np.hypot(d[:, :, 0], d[:, :, 1])
    safe = np.where(norm > 1e-12, norm, 1.0)
    u[:, :, 2:4] = d / safe[:, :, None]
    if feature_mode == "pairwise":
        return u.reshape(n * (m // 2), 8)
    return u.reshape(n * m, 4)


def sample_pair_indices(m: int, feature_mode: str) -> np.ndarray:
    if feature_mode == "pairwise":
        return np.arange(m, dtype=np.int64).reshape(m // 2, 2)
    return np.arange(m, dtype=np.int64).reshape(m, 1)


def quat_rotmat_jacobian(q: np.ndarray) -> np.ndarray:
    """d(rotation matrix)/d(quaternion) of the algebraic map, (B, 4, 3, 3)."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    zero = np.zeros_like(w)
    J = np.empty((q.shape[0], 4, 3, 3), dtype=np.float64)
    J[:, 0] = 2.0 * np.stack(
        [zero, -z, y, z, zero, -x, -y, x, zero], axis=1
    ).reshape(-1, 3, 3)
    J[:, 1] = 2.0 * np.stack(
        [zero, y, z, y, -2 * x, -w, z, w, -2 * x], axis=1
    ).reshape(-1, 3, 3)
    J[:, 2] = 2.0 * np.stack(
        [-2 * y, x, w, x, zero, z, -w, z, -2 * y], axis=1
    ).reshape(-1, 3, 3)
    J[:, 3] = 2.0 * np.stack(
        [-2 * z, -w, x, w, -2 * z, y, x, y, zero], axis=1
    ).reshape(-1, 3, 3)
    return J


def _rotmats_from_unit_quats(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def forward_batch(params: PoseHeadParams, sample_batch: list, intrinsics: list) -> ForwardCache:
    """Run the head on B scenes' samples; scenes must share (n, m)."""
    arch, variant = params.arch, params.variant
    B = len(sample_batch)
    P = arch.features_per_group(variant)
    n = arch.n

    rows = [build_inputs(s, K, variant.feature_mode) for s, K in zip(sample_batch, intrinsics)]
    X = np.concatenate(rows, axis=0) if B > 1 else rows[0]

    s_acts, s_pres = mlp_forward(params.phi_s, X)
    feats = s_acts[-1].reshape(B, n, P, arch.feat_dim)

    if variant.aggregator == "mean":
        g = feats.mean(axis=2)
        max_idx = None
    else:
        max_idx = feats.argmax(axis=2)  # first max wins ties: lowest pair index
        g = feats.max(axis=2)

    g_acts, g_pres = mlp_forward(params.phi_g, g.reshape(B, n * arch.feat_dim))
    raw = g_acts[-1]
    if not np.all(np.isfinite(raw)):
        raise NumericalFailureError("non-finite activation in pose regression output")

    qraw = raw[:, :4]
    qraw_norm = np.linalg.norm(qraw, axis=1)
    if np.any(qraw_norm <= _EPS_QUAT):
        raise DegenerateQuaternionError(
            f"raw quaternion norm {qraw_norm.min():.3e} too small to normalize"
        )
    qhat = qraw / qraw_norm[:, None]
    that = raw[:, 4:]

    return ForwardCache(
        params=params,
        sources=tuple(id(s) for s in sample_batch),
        B=B, n=n, P=P,
        s_acts=s_acts, s_pres=s_pres,
        feats=feats, max_idx=max_idx,
        g_acts=g_acts, g_pres=g_pres,
        raw=raw, qraw_norm=qraw_norm, qhat=qhat, that=that,
    )


def _check_scene_shape(params: PoseHeadParams, cset) -> None:
    arch = params.arch
    if cset.n != arch.n or cset.m != arch.m:
        raise ConfigError(
            f"scene shape (n={cset.n}, m={cset.m}) does not match head arch "
            f"(n={arch.n}, m={arch.m})"
        )


def forward(params: PoseHeadParams, cset) -> tuple:
    """Single-scene forward: returns (pose_pred, FeatureBlock, cache)."""
    _check_scene_shape(params, cset)
    cache = forward_batch(params, [cset.samples], [cset.intrinsics])
    pose = Pose(cache.qhat[0], cache.that[0])
    block = FeatureBlock(
        features=cache.feats[0],
        sample_indices=sample_pair_indices(params.arch.m, params.variant.feature_mode),
    )
    return pose, block, cache


def backward_batch(
    params: PoseHeadParams,
    cache: ForwardCache,
    gt_R: np.ndarray,      # (B, 3, 3)
    gt_t: np.ndarray,      # (B, 3)
    kps3d: np.ndarray,     # (n, 3)
    lambda_p: float,
    lambda_t: float,
    alpha: float,
    mining: str,
    triplet_seeds: list,
) -> tuple:
    """Analytic gradients plus loss parts for a forward-pass cache.

    ``triplet_seeds`` gives one mining seed per scene; pass ``lambda_t = 0``
    (or a triplet-disabled variant upstream) to skip the triplet term.
    """
    if cache.params is not params:
        raise ContractViolationError("backward called with a cache from different parameters")
    arch, variant = params.arch, params.variant
    B, n, P, D = cache.B, cache.n, cache.P, arch.feat_dim
    kps3d = np.asarray(kps3d, dtype=np.float64)

    Rhat = _rotmats_from_unit_quats(cache.qhat)
    pred = np.einsum("bij,nj->bni", Rhat, kps3d) + cache.that[:, None, :]
    gt = np.einsum("bij,nj->bni", gt_R, kps3d) + gt_t[:, None, :]
    e = pred - gt
    d = np.sqrt((e * e).sum(axis=2))
    loss_pose = float(d.mean())

    # d|e|/de = e/|e|; zero subgradient at coincident points
    safe = np.where(d > 0.0, d, 1.0)
    grad_e = (lambda_p / (B * n)) * e / safe[:, :, None]
    grad_that = grad_e.sum(axis=1)
    grad_Rhat = np.einsum("bni,nj->bij", grad_e, kps3d)

    J = quat_rotmat_jacobian(cache.qhat)
    grad_qhat = np.einsum("bcij,bij->bc", J, grad_Rhat)
    # through normalization: (I - qhat qhat^T) / |qraw|
    proj = grad_qhat - (grad_qhat * cache.qhat).sum(axis=1, keepdims=True) * cache.qhat
    grad_qraw = proj / cache.qraw_norm[:, None]
    grad_raw = np.concatenate([grad_qraw, grad_that], axis=1)

    phi_g_grads, grad_hin = mlp_backward(params.phi_g, cache.g_acts, cache.g_pres, grad_raw)
    grad_g = grad_hin.reshape(B, n, D)

    grad_feats = np.empty_like(cache.feats)
    if variant.aggregator == "mean":
        grad_feats[:] = grad_g[:, :, None, :] / P
    else:
        grad_feats[:] = 0.0
        np.put_along_axis(grad_feats, cache.max_idx[:, :, None, :], grad_g[:, :, None, :], axis=2)

    loss_trip = 0.0
    use_triplet = variant.triplet_enabled and lambda_t != 0.0
    if use_triplet:
        flat = cache.feats.reshape(B * n * P, D)
        pos = np.empty(B * n * P, dtype=np.int64)
        neg = np.empty(B * n * P, dtype=np.int64)
        for b in range(B):
            pb, nb = mine_triplets(n, P, mining, triplet_seeds[b], features=cache.feats[b])
            off = b * n * P
            pos[off:off + n * P] = pb + off
            neg[off:off + n * P] = nb + off
        terms, _, _ = triplet_terms(flat, pos, neg, alpha)
        loss_trip = float(terms.mean())
        gf = triplet_grad(flat, pos, neg, alpha, lambda_t / flat.shape[0])
        grad_feats += gf.reshape(B, n, P, D)

    phi_s_grads, _ = mlp_backward(
        params.phi_s, cache.s_acts, cache.s_pres, grad_feats.reshape(B * n * P, D)
    )

    total = lambda_p * loss_pose + (lambda_t * loss_trip if use_triplet else 0.0)
    parts = {"pose_loss": loss_pose, "triplet_loss": loss_trip, "total": total}
    return Grads(phi_s=phi_s_grads, phi_g=phi_g_grads), parts


def backward(params: PoseHeadParams, cset, pose_gt: Pose, cfg, cache: ForwardCache, seed=None):
    """Single-scene gradients of the combined objective; cache must come from
    a matching forward() call on the same correspondence set."""
    if cache.B != 1 or cache.sources != (id(cset.samples),):
        raise ContractViolationError("cache does not correspond to this scene")
    grads, _ = backward_batch(
        params, cache,
        gt_R=quat_to_rotmat(pose_gt.q)[None],
        gt_t=np.asarray(pose_gt.t, dtype=np.float64)[None],
        kps3d=cset.keypoints3d.points,
        lambda_p=cfg.lambda_p,
        lambda_t=cfg.lambda_t,
        alpha=cfg.alpha,
        mining=cfg.mining,
        triplet_seeds=[cfg.seed if seed is None else seed],
    )
    return grads
