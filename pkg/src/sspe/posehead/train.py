"""Training loop and inference for the pose head.

All randomness (initialization, epoch shuffling, per-step triplet mining)
derives from the config seed through fixed spawn keys, so a re-run with the
same config is bit-identical.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, NumericalFailureError
from ..geometry import Pose, quat_to_rotmat
from .losses import MINING_STRATEGIES
from .net import backward_batch, forward, forward_batch
from .optim import adam_step, init_adam_state, lr_at_step
from .params import Arch, PoseHeadParams, Variant, init_params, save_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    alpha: float = 0.1
    lambda_p: float = 0.01
    lambda_t: float = 0.1
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    milestones: tuple = (0.5, 0.75, 0.9)
    mining: str = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(float(f) for f in self.milestones))
        if self.alpha < 0 or self.lambda_p < 0 or self.lambda_t < 0:
            raise ConfigError("alpha and loss coefficients must be >= 0")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError(f"invalid lr/batch/epochs: {self.lr}, {self.batch_size}, {self.epochs}")
        ms = self.milestones
        if any(not 0.0 < f < 1.0 for f in ms) or any(a >= b for a, b in zip(ms, ms[1:])):
            raise ConfigError(f"milestones must be strictly increasing in (0, 1): {ms}")
        if self.mining not in MINING_STRATEGIES:
            raise ConfigError(f"mining must be one of {MINING_STRATEGIES}: {self.mining}")

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "alpha": self.alpha,
            "lambda_p": self.lambda_p,
            "lambda_t": self.lambda_t,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "milestones": list(self.milestones),
            "mining": self.mining,
        }

    @staticmethod
    def from_json(d: dict) -> "TrainConfig":
        return TrainConfig(
            seed=int(d["seed"]),
            alpha=float(d.get("alpha", 0.1)),
            lambda_p=float(d.get("lambda_p", 0.01)),
            lambda_t=float(d.get("lambda_t", 0.1)),
            lr=float(d.get("lr", 1e-3)),
            batch_size=int(d.get("batch_size", 32)),
            epochs=int(d.get("epochs", 30)),
            milestones=tuple(d.get("milestones", (0.5, 0.75, 0.9))),
            mining=d.get("mining", "uniform"),
        )


def _scene_arrays(scenes: list) -> tuple:
    """Pre-extract per-scene ground truth for the batched loss."""
    gt_R = np.stack([quat_to_rotmat(rec.cset.pose_gt.q) for rec in scenes])
    gt_t = np.stack([rec.cset.pose_gt.t for rec in scenes])
    return gt_R, gt_t


def train(
    scenes: list,
    cfg: TrainConfig,
    variant: Variant,
    arch: Arch = None,
    out_path=None,
    log=None,
) -> tuple:
    """Train on a list of SceneRecords; returns (params, history).

    ``history`` holds per-epoch means of the pose loss, triplet term, and the
    combined objective. When ``out_path`` is given a versioned checkpoint is
    written there.
    """
    if not scenes:
        raise ConfigError("training needs at least one scene")
    n = scenes[0].cset.n
    m = scenes[0].cset.m
    if any(rec.cset.n != n or rec.cset.m != m for rec in scenes):
        raise ConfigError("all training scenes must share (n, m)")
    if cfg.batch_size > len(scenes):
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds dataset size {len(scenes)}")
    if arch is None:
        arch = Arch(n=n, m=m)
    elif arch.n != n or arch.m != m:
        raise ConfigError(f"arch (n={arch.n}, m={arch.m}) does not match dataset (n={n}, m={m})")

    params = init_params(arch, variant, seed=cfg.seed)
    state = init_adam_state(params)
    kps3d = scenes[0].cset.keypoints3d.points
    gt_R_all, gt_t_all = _scene_arrays(scenes)
    samples_all = [rec.cset.samples for rec in scenes]
    intr_all = [rec.cset.intrinsics for rec in scenes]

    N = len(scenes)
    steps_per_epoch = (N + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * steps_per_epoch
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        shuffle_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1, epoch))
        )
        order = shuffle_rng.permutation(N)
        ep_pose, ep_trip, ep_total = 0.0, 0.0, 0.0
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            cache = forward_batch(
                params, [samples_all[i] for i in idx], [intr_all[i] for i in idx]
            )
            seeds = [
                np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2, step, k))
                for k in range(len(idx))
            ]
            grads, parts = backward_batch(
                params, cache, gt_R_all[idx], gt_t_all[idx], kps3d,
                lambda_p=cfg.lambda_p, lambda_t=cfg.lambda_t, alpha=cfg.alpha,
                mining=cfg.mining, triplet_seeds=seeds,
            )
            if not np.isfinite(parts["total"]):
                raise NumericalFailureError(
                    f"non-finite loss at epoch {epoch} step {step}: {parts}"
                )
            lr = lr_at_step(cfg.lr, step, total_steps, cfg.milestones)
            params, state = adam_step(params, grads, state, lr)
            w = len(idx) / N
            ep_pose += w * parts["pose_loss"]
            ep_trip += w * parts["triplet_loss"]
            ep_total += w * parts["total"]
            step += 1
        history.append({"epoch": epoch, "pose_loss": ep_pose, "triplet_loss": ep_trip, "total": ep_total})
        if log is not None:
            log(
                f"epoch {epoch + 1}/{cfg.epochs}  L_p={ep_pose:.6f}  "
                f"L_t={ep_trip:.6f}  total={ep_total:.8f}"
            )

    if out_path is not None:
        save_checkpoint(params, out_path, train_config=cfg.to_json(), rng_seed=cfg.seed)
    return params, history


def predict(params: PoseHeadParams, cset) -> Pose:
    """Deterministic forward-only pose prediction."""
    pose, _, _ = forward(params, cset)
    return pose
