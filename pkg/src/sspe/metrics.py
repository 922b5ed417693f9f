"""ADD-family pose evaluation, feature-cluster scoring, and feature export."""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateFeatureError, UndefinedMetricError
from .geometry import Pose, transform_points
from .models import ObjectModel, model_diameter


def add_error(pose_pred: Pose, pose_gt: Pose, model: ObjectModel) -> float:
    """Mean distance between model points under predicted vs ground-truth pose."""
    pred = transform_points(pose_pred, model.points)
    gt = transform_points(pose_gt, model.points)
    return float(np.linalg.norm(pred - gt, axis=1).mean())


def adds_error(pose_pred: Pose, pose_gt: Pose, model: ObjectModel) -> float:
    """Symmetric variant: mean distance to the closest ground-truth-transformed point."""
    pred = transform_points(pose_pred, model.points)
    gt = transform_points(pose_gt, model.points)
    dists, _ = cKDTree(gt).query(pred, k=1)
    return float(np.mean(dists))


def add01d_accuracy(errors, model: ObjectModel, failures: int = 0) -> float:
    """Percentage of poses with error strictly below 10% of the model diameter.

    Solver failures count in the denominator as incorrect poses.
    """
    errors = list(errors)
    total = len(errors) + failures
    if total == 0:
        raise UndefinedMetricError("accuracy over an empty evaluation set is undefined")
    threshold = 0.1 * model_diameter(model)
    correct = sum(1 for e in errors if e < threshold)
    return 100.0 * correct / total


def scene_error(pose_pred: Pose, pose_gt: Pose, model: ObjectModel) -> float:
    """ADD, or ADD-S when the model is flagged symmetric."""
    if model.symmetric:
        return adds_error(pose_pred, pose_gt, model)
    return add_error(pose_pred, pose_gt, model)


@dataclass
class EvalReport:
    """Per-scene errors plus the aggregate accuracy for one method/dataset pair."""

    variant: str
    dataset: str
    metric: str               # "add" or "adds"
    errors: list
    failures: int
    accuracy: float

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "dataset": self.dataset,
            "metric": self.metric,
            "errors": [float(e) for e in self.errors],
            "failures": self.failures,
            "scenes": len(self.errors) + self.failures,
            "accuracy": self.accuracy,
        }


def evaluate_poses(pose_pairs, model: ObjectModel, variant: str, dataset: str, failures: int = 0) -> EvalReport:
    """Build an EvalReport from (pose_pred, pose_gt) pairs."""
    errors = [scene_error(pred, gt, model) for pred, gt in pose_pairs]
    return EvalReport(
        variant=variant,
        dataset=dataset,
        metric="adds" if model.symmetric else "add",
        errors=errors,
        failures=failures,
        accuracy=add01d_accuracy(errors, model, failures),
    )


def _flat_features(features) -> tuple:
    arr = np.asarray(getattr(features, "features", features), dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"features must be (n, P, D), got {arr.shape}")
    n, P, D = arr.shape
    flat = arr.reshape(n * P, D)
    labels = np.repeat(np.arange(n), P)
    return flat, labels


def cluster_score(features) -> tuple:
    """(intra_sim, inter_sim, silhouette) of features grouped by keypoint.

    Similarities are cosine; the silhouette uses cosine distance with the
    keypoint index as the cluster label. A zero spread (max(a, b) == 0)
    contributes silhouette 0.
    """
    flat, labels = _flat_features(features)
    n = labels.max() + 1
    if n < 2 or flat.shape[0] < 2 * n:
        raise ValueError("cluster_score needs >= 2 groups with >= 2 features each")
    norms = np.linalg.norm(flat, axis=1)
    if norms.min() <= 1e-12:
        raise DegenerateFeatureError(f"feature norm {norms.min():.3e} too small")
    unit = flat / norms[:, None]
    S = np.clip(unit @ unit.T, -1.0, 1.0)

    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(flat.shape[0], dtype=bool)
    intra = float(S[same & off_diag].mean())
    inter = float(S[~same].mean())

    D = 1.0 - S
    F = flat.shape[0]
    sil = np.zeros(F)
    counts = np.bincount(labels, minlength=n)
    for i in range(F):
        own = labels[i]
        a = D[i, (labels == own) & off_diag[i]].mean() if counts[own] > 1 else 0.0
        b = min(D[i, labels == other].mean() for other in range(n) if other != own)
        denom = max(a, b)
        sil[i] = (b - a) / denom if denom > 0 else 0.0
    return intra, inter, float(sil.mean())


def export_features(features, labels, path) -> int:
    """Write features to CSV with header ``label,f0..f{D-1}``; returns rows written."""
    arr = np.asarray(getattr(features, "features", features), dtype=np.float64)
    if arr.ndim == 3:
        flat, auto_labels = _flat_features(arr)
    else:
        flat = arr.reshape(arr.shape[0], -1) if arr.size else arr.reshape(0, 0)
        auto_labels = None
    if labels is None:
        if auto_labels is None:
            raise ValueError("labels required for 2D feature arrays")
        labels = auto_labels
    labels = list(labels)
    if len(labels) != flat.shape[0]:
        raise ValueError(f"{len(labels)} labels for {flat.shape[0]} feature rows")

    D = flat.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(D)])
        for lab, row in zip(labels, flat):
            writer.writerow([lab] + [format(v, ".17g") for v in row])
    return flat.shape[0]
