"""Differentiable pose-estimator head: pairwise features, triplet
regularization, aggregation, pose regression, manual backprop, Adam."""

from .losses import cosine_similarity, mine_triplets, pose_loss, total_loss, triplet_loss
from .net import FeatureBlock, ForwardCache, Grads, backward, backward_batch, forward, forward_batch
from .optim import AdamState, adam_step, init_adam_state, lr_at_step
from .params import (
    VARIANTS,
    Arch,
    DenseLayer,
    PoseHeadParams,
    Variant,
    init_params,
    load_checkpoint,
    named_variant,
    save_checkpoint,
)
from .train import TrainConfig, predict, train

__all__ = [
    "Arch",
    "AdamState",
    "DenseLayer",
    "FeatureBlock",
    "ForwardCache",
    "Grads",
    "PoseHeadParams",
    "TrainConfig",
    "VARIANTS",
    "Variant",
    "adam_step",
    "backward",
    "backward_batch",
    "cosine_similarity",
    "forward",
    "forward_batch",
    "init_adam_state",
    "init_params",
    "load_checkpoint",
    "lr_at_step",
    "mine_triplets",
    "named_variant",
    "pose_loss",
    "predict",
    "save_checkpoint",
    "total_loss",
    "train",
    "triplet_loss",
]
