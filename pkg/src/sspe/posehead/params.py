"""Pose-head parameters: variants, architecture, initialization, checkpoints.

The head is a fixed two-MLP architecture: a shared feature MLP applied to
every direction-vector sample (single mode) or concatenated sample pair
(pairwise mode), a permutation-invariant per-keypoint aggregator, and a
regression MLP mapping the concatenated group features to quaternion (4) +
translation (3).
"""

from dataclasses import dataclass, field

import numpy as np

from .. import jsonio
from ..errors import ConfigError

FEATURE_MODES = ("single", "pairwise")
AGGREGATORS = ("max", "mean")

CHECKPOINT_VERSION = 1

POSE_OUTPUT_WIDTH = 7  # quaternion (w,x,y,z) + translation (x,y,z)


@dataclass(frozen=True)
class Variant:
    """One head configuration; four named presets are registered below."""

    feature_mode: str = "pairwise"
    aggregator: str = "mean"
    triplet_enabled: bool = True

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigError(f"feature_mode must be one of {FEATURE_MODES}: {self.feature_mode}")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"aggregator must be one of {AGGREGATORS}: {self.aggregator}")

    @property
    def input_width(self) -> int:
        return 8 if self.feature_mode == "pairwise" else 4

    def to_json(self) -> dict:
        return {
            "feature_mode": self.feature_mode,
            "aggregator": self.aggregator,
            "triplet_enabled": self.triplet_enabled,
        }

    @staticmethod
    def from_json(d: dict) -> "Variant":
        return Variant(d["feature_mode"], d["aggregator"], bool(d["triplet_enabled"]))


VARIANTS = {
    "sspe-r": Variant("single", "max", False),
    "sspe-rp": Variant("single", "mean", False),
    "sspe-lc": Variant("pairwise", "mean", False),
    "sspe-ours": Variant("pairwise", "mean", True),
}


def named_variant(name: str) -> Variant:
    key = name.lower()
    if key not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; known: {sorted(VARIANTS)}")
    return VARIANTS[key]


@dataclass(frozen=True)
class Arch:
    """Layer plan plus the scene shape (n keypoints, m samples) it was built for."""

    n: int
    m: int
    feat_dim: int = 128
    phi_s_hidden: tuple = (64, 128)
    phi_g_hidden: tuple = (512, 256)

    def __post_init__(self):
        object.__setattr__(self, "phi_s_hidden", tuple(int(w) for w in self.phi_s_hidden))
        object.__setattr__(self, "phi_g_hidden", tuple(int(w) for w in self.phi_g_hidden))
        if self.n < 1 or self.m < 1 or self.feat_dim < 1:
            raise ConfigError(f"invalid arch sizes: {self}")
        if any(w < 1 for w in self.phi_s_hidden + self.phi_g_hidden):
            raise ConfigError(f"layer widths must be >= 1: {self}")

    def phi_s_widths(self, variant: Variant) -> list:
        return [variant.input_width, *self.phi_s_hidden, self.feat_dim]

    def phi_g_widths(self) -> list:
        return [self.n * self.feat_dim, *self.phi_g_hidden, POSE_OUTPUT_WIDTH]

    def features_per_group(self, variant: Variant) -> int:
        if variant.feature_mode == "pairwise":
            if self.m % 2 != 0:
                raise ConfigError(f"pairwise mode needs even m, got {self.m}")
            return self.m // 2
        return self.m

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "feat_dim": self.feat_dim,
            "phi_s_hidden": list(self.phi_s_hidden),
            "phi_g_hidden": list(self.phi_g_hidden),
        }

    @staticmethod
    def from_json(d: dict) -> "Arch":
        return Arch(
            n=int(d["n"]),
            m=int(d["m"]),
            feat_dim=int(d["feat_dim"]),
            phi_s_hidden=tuple(d["phi_s_hidden"]),
            phi_g_hidden=tuple(d["phi_g_hidden"]),
        )


@dataclass
class DenseLayer:
    W: np.ndarray  # (in, out)
    b: np.ndarray  # (out,)


@dataclass
class PoseHeadParams:
    """Trainable state: the two MLP layer stacks plus their descriptors."""

    phi_s: list
    phi_g: list
    arch: Arch
    variant: Variant

    def arrays(self) -> list:
        """All parameter arrays in a fixed order (phi_s then phi_g, W then b)."""
        out = []
        for layer in self.phi_s + self.phi_g:
            out.append(layer.W)
            out.append(layer.b)
        return out

    def copy(self) -> "PoseHeadParams":
        return PoseHeadParams(
            phi_s=[DenseLayer(l.W.copy(), l.b.copy()) for l in self.phi_s],
            phi_g=[DenseLayer(l.W.copy(), l.b.copy()) for l in self.phi_g],
            arch=self.arch,
            variant=self.variant,
        )

    def allclose(self, other: "PoseHeadParams", rtol=0.0, atol=0.0) -> bool:
        a, b = self.arrays(), other.arrays()
        return len(a) == len(b) and all(
            x.shape == y.shape and np.allclose(x, y, rtol=rtol, atol=atol) for x, y in zip(a, b)
        )


def _init_stack(widths: list, rng) -> list:
    """Fan-in-scaled uniform weights W ~ U(-1/sqrt(in), 1/sqrt(in)), zero biases."""
    layers = []
    for w_in, w_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(w_in)
        W = rng.uniform(-bound, bound, size=(w_in, w_out))
        layers.append(DenseLayer(W=W, b=np.zeros(w_out)))
    return layers


def init_params(arch: Arch, variant: Variant, seed) -> PoseHeadParams:
    """Deterministic initialization under the given seed."""
    arch.features_per_group(variant)  # validates m parity for pairwise mode
    rng = np.random.default_rng(seed)
    return PoseHeadParams(
        phi_s=_init_stack(arch.phi_s_widths(variant), rng),
        phi_g=_init_stack(arch.phi_g_widths(), rng),
        arch=arch,
        variant=variant,
    )


def save_checkpoint(params: PoseHeadParams, path, train_config=None, rng_seed=None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "variant": params.variant.to_json(),
        "arch": params.arch.to_json(),
        "phi_s": [{"W": l.W.tolist(), "b": l.b.tolist()} for l in params.phi_s],
        "phi_g": [{"W": l.W.tolist(), "b": l.b.tolist()} for l in params.phi_g],
        "train_config": train_config,
        "rng_seed": rng_seed,
    }
    jsonio.dump(doc, path)


def load_checkpoint(path) -> PoseHeadParams:
    doc = jsonio.load(path)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')!r}")
    variant = Variant.from_json(doc["variant"])
    arch = Arch.from_json(doc["arch"])
    params = PoseHeadParams(
        phi_s=[DenseLayer(np.array(l["W"], dtype=np.float64), np.array(l["b"], dtype=np.float64))
               for l in doc["phi_s"]],
        phi_g=[DenseLayer(np.array(l["W"], dtype=np.float64), np.array(l["b"], dtype=np.float64))
               for l in doc["phi_g"]],
        arch=arch,
        variant=variant,
    )
    widths_s = arch.phi_s_widths(variant)
    widths_g = arch.phi_g_widths()
    for layer, w_in, w_out in zip(params.phi_s, widths_s[:-1], widths_s[1:]):
        if layer.W.shape != (w_in, w_out) or layer.b.shape != (w_out,):
            raise ConfigError(f"checkpoint phi_s layer shape {layer.W.shape} != ({w_in},{w_out})")
    for layer, w_in, w_out in zip(params.phi_g, widths_g[:-1], widths_g[1:]):
        if layer.W.shape != (w_in, w_out) or layer.b.shape != (w_out,):
            raise ConfigError(f"checkpoint phi_g layer shape {layer.W.shape} != ({w_in},{w_out})")
    return params
