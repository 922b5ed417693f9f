"""Command-line entry points wiring the modules into reproducible experiments.

Subcommands: gen-data, keypoints, train, eval, baseline, ablate,
export-features. Every command writes a RunManifest JSON next to its primary
output with the fully resolved configuration, so a run can be reproduced
bit-identically. Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

import argparse
import sys

import numpy as np

from . import __version__, jsonio
from ._kernels import BACKEND
from .baseline import VotingConfig, estimate_pose_baseline
from .errors import SspeError
from .posehead import (
    Arch,
    TrainConfig,
    forward,
    load_checkpoint,
    named_variant,
    predict,
    train,
)
from .metrics import EvalReport, add01d_accuracy, cluster_score, export_features, scene_error
from .models import farthest_point_sampling, load_point_cloud
from .simulator import DatasetConfig, NoiseConfig, OcclusionConfig, generate_dataset, read_dataset
from .geometry import CameraIntrinsics

OCC_PRESETS = {"light": (0.1, 0.3), "heavy": (0.3, 0.9)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on bad flags; the CLI contract wants 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _parse_range(spec, name: str) -> tuple:
    if isinstance(spec, str) and spec in OCC_PRESETS:
        return OCC_PRESETS[spec]
    if isinstance(spec, (list, tuple)):
        lo, hi = float(spec[0]), float(spec[1])
        return lo, hi
    try:
        lo, hi = (float(x) for x in str(spec).split(":"))
        return lo, hi
    except ValueError:
        raise UsageError(f"{name} must be 'lo:hi' or a preset {sorted(OCC_PRESETS)}: {spec!r}") from None


def _parse_int_list(spec) -> tuple:
    if isinstance(spec, (list, tuple)):
        return tuple(int(x) for x in spec)
    return tuple(int(x) for x in str(spec).split(","))


def _parse_float_list(spec) -> tuple:
    if isinstance(spec, (list, tuple)):
        return tuple(float(x) for x in spec)
    return tuple(float(x) for x in str(spec).split(","))


def _write_manifest(out_path, command: str, argv: list, config: dict, seed, artifacts: list) -> None:
    jsonio.dump(
        {
            "command": command,
            "argv": list(argv),
            "config": config,
            "master_seed": seed,
            "artifacts": [str(a) for a in artifacts],
            "tool_version": __version__,
            "kernel_backend": BACKEND,
        },
        str(out_path) + ".manifest.json",
    )


def _dataset_config(args) -> DatasetConfig:
    occ = _parse_range(args.occ, "--occ")
    z_range = _parse_range(args.z_range, "--z-range")
    return DatasetConfig(
        model_path=args.model,
        scenes=args.scenes,
        seed=args.seed,
        n=args.n,
        m=args.m,
        noise=NoiseConfig(
            angle_sigma=args.angle_sigma,
            outlier_rate=args.outlier_rate,
            pixel_jitter=args.pixel_jitter,
        ),
        occ=OcclusionConfig(*occ),
        intrinsics=CameraIntrinsics(args.fx, args.fy, args.cx, args.cy),
        xy_extent=args.xy_extent,
        z_range=z_range,
    )


def _cmd_gen_data(args, argv) -> int:
    cfg = _dataset_config(args)
    count = generate_dataset(cfg, args.out)
    _write_manifest(args.out, "gen-data", argv, cfg.to_json(), args.seed, [args.out])
    print(f"wrote {count} scenes to {args.out}")
    return 0


def _cmd_keypoints(args, argv) -> int:
    model = load_point_cloud(args.model)
    kps = farthest_point_sampling(model, args.n, args.start_rule)
    doc = {
        "model": model.name,
        "model_path": args.model,
        "n": args.n,
        "start_rule": args.start_rule,
        "indices": kps.indices.tolist(),
        "points": kps.points.tolist(),
    }
    jsonio.dump(doc, args.out)
    _write_manifest(args.out, "keypoints", argv, doc, None, [args.out])
    print(f"selected {args.n} keypoints from {model.name} -> {args.out}")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        seed=args.seed,
        alpha=args.alpha,
        lambda_p=args.lambda_p,
        lambda_t=args.lambda_t,
        lr=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        milestones=_parse_float_list(args.milestones),
        mining=args.mining,
    )


def _arch_for(args, scenes) -> Arch:
    return Arch(
        n=scenes[0].cset.n,
        m=scenes[0].cset.m,
        feat_dim=args.feat_dim,
        phi_s_hidden=_parse_int_list(args.phi_s),
        phi_g_hidden=_parse_int_list(args.phi_g),
    )


def _cmd_train(args, argv) -> int:
    scenes = read_dataset(args.data)
    cfg = _train_config(args)
    variant = named_variant(args.variant)
    arch = _arch_for(args, scenes)
    log = None if args.quiet else print
    train(scenes, cfg, variant, arch=arch, out_path=args.out, log=log)
    config = {
        "data": args.data,
        "variant": args.variant,
        "train_config": cfg.to_json(),
        "arch": arch.to_json(),
    }
    _write_manifest(args.out, "train", argv, config, args.seed, [args.out])
    print(f"checkpoint -> {args.out}")
    return 0


def _evaluate_head(params, scenes, model) -> EvalReport:
    errors = []
    failures = 0
    for rec in scenes:
        try:
            pose = predict(params, rec.cset)
            errors.append(scene_error(pose, rec.cset.pose_gt, model))
        except SspeError:
            failures += 1
    return EvalReport(
        variant="",
        dataset="",
        metric="adds" if model.symmetric else "add",
        errors=errors,
        failures=failures,
        accuracy=add01d_accuracy(errors, model, failures),
    )


def _cmd_eval(args, argv) -> int:
    params = load_checkpoint(args.checkpoint)
    scenes = read_dataset(args.data)
    model = load_point_cloud(args.model)
    report = _evaluate_head(params, scenes, model)
    report.variant = f"{params.variant.feature_mode}/{params.variant.aggregator}" + (
        "+triplet" if params.variant.triplet_enabled else ""
    )
    report.dataset = args.data
    jsonio.dump(report.to_json(), args.out)
    _write_manifest(
        args.out, "eval", argv,
        {"checkpoint": args.checkpoint, "data": args.data, "model": args.model},
        None, [args.out],
    )
    print(f"ADD0.1d accuracy: {report.accuracy:.2f}% ({report.failures} failures) -> {args.out}")
    return 0


def _cmd_baseline(args, argv) -> int:
    scenes = read_dataset(args.data)
    model = load_point_cloud(args.model)
    cfg = VotingConfig(
        hypothesis_count=args.hypotheses,
        inlier_cos_threshold=args.inlier_cos,
        min_inlier_fraction=args.min_inlier_fraction,
    )
    errors = []
    failures = 0
    for rec in scenes:
        seed = np.random.SeedSequence(entropy=args.seed, spawn_key=(rec.scene_id,))
        try:
            pose = estimate_pose_baseline(rec.cset, cfg, seed)
            errors.append(scene_error(pose, rec.cset.pose_gt, model))
        except SspeError:
            failures += 1
    report = EvalReport(
        variant="baseline",
        dataset=args.data,
        metric="adds" if model.symmetric else "add",
        errors=errors,
        failures=failures,
        accuracy=add01d_accuracy(errors, model, failures),
    )
    jsonio.dump(report.to_json(), args.out)
    config = {
        "data": args.data,
        "model": args.model,
        "hypotheses": args.hypotheses,
        "inlier_cos": args.inlier_cos,
        "min_inlier_fraction": args.min_inlier_fraction,
    }
    _write_manifest(args.out, "baseline", argv, config, args.seed, [args.out])
    print(f"baseline ADD0.1d accuracy: {report.accuracy:.2f}% ({report.failures} failures) -> {args.out}")
    return 0


def _mean_silhouette(params, scenes, count: int) -> float:
    vals = []
    for rec in scenes[:count]:
        _, block, _ = forward(params, rec.cset)
        vals.append(cluster_score(block)[2])
    return float(np.mean(vals)) if vals else float("nan")


def _cmd_ablate(args, argv) -> int:
    train_scenes = read_dataset(args.train)
    test_scenes = read_dataset(args.test)
    model = load_point_cloud(args.model)
    variant_names = [v.strip() for v in args.variants.split(",") if v.strip()]
    seeds = [args.seed + k for k in range(args.seeds)]

    results = {}
    for name in variant_names:
        variant = named_variant(name)
        accs, sils = [], []
        for seed in seeds:
            cfg = TrainConfig(
                seed=seed,
                alpha=args.alpha,
                lambda_p=args.lambda_p,
                lambda_t=args.lambda_t,
                lr=args.lr,
                batch_size=args.batch,
                epochs=args.epochs,
                milestones=_parse_float_list(args.milestones),
                mining=args.mining,
            )
            arch = _arch_for(args, train_scenes)
            params, _ = train(train_scenes, cfg, variant, arch=arch, log=None)
            report = _evaluate_head(params, test_scenes, model)
            accs.append(report.accuracy)
            if args.cluster_scenes > 0:
                sils.append(_mean_silhouette(params, test_scenes, args.cluster_scenes))
            print(f"{name} seed={seed}: ADD0.1d={report.accuracy:.2f}%"
                  + (f" silhouette={sils[-1]:.4f}" if sils else ""))
        results[name] = {
            "accuracy_per_seed": accs,
            "mean_accuracy": float(np.mean(accs)),
        }
        if sils:
            results[name]["silhouette_per_seed"] = sils
            results[name]["mean_silhouette"] = float(np.mean(sils))

    header = f"{'variant':<12}" + "".join(f"seed{s:<8}" for s in seeds) + f"{'mean':<8}"
    print(header)
    for name in variant_names:
        row = results[name]
        cells = "".join(f"{a:<12.2f}" for a in row["accuracy_per_seed"])
        print(f"{name:<12}{cells}{row['mean_accuracy']:<8.2f}")

    doc = {
        "train": args.train,
        "test": args.test,
        "model": args.model,
        "seeds": seeds,
        "epochs": args.epochs,
        "results": results,
    }
    jsonio.dump(doc, args.out)
    _write_manifest(args.out, "ablate", argv, doc, args.seed, [args.out])
    return 0


def _cmd_export_features(args, argv) -> int:
    params = load_checkpoint(args.checkpoint)
    scenes = read_dataset(args.data)
    if args.scenes > 0:
        scenes = scenes[: args.scenes]
    blocks = []
    labels = []
    for rec in scenes:
        _, block, _ = forward(params, rec.cset)
        n, P, D = block.features.shape
        blocks.append(block.features.reshape(n * P, D))
        labels.extend(np.repeat(np.arange(n), P).tolist())
    flat = np.concatenate(blocks, axis=0) if blocks else np.zeros((0, 0))
    count = export_features(flat, labels, args.out)
    _write_manifest(
        args.out, "export-features", argv,
        {"checkpoint": args.checkpoint, "data": args.data, "scenes": args.scenes},
        None, [args.out],
    )
    print(f"wrote {count} feature rows to {args.out}")
    return 0


def _add_train_flags(p) -> None:
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--lambda-p", dest="lambda_p", type=float, default=0.01)
    p.add_argument("--lambda-t", dest="lambda_t", type=float, default=0.1)
    p.add_argument("--milestones", default="0.5,0.75,0.9")
    p.add_argument("--mining", choices=("uniform", "hardest-negative"), default="uniform")
    p.add_argument("--feat-dim", dest="feat_dim", type=int, default=128)
    p.add_argument("--phi-s", dest="phi_s", default="64,128")
    p.add_argument("--phi-g", dest="phi_g", default="512,256")


def build_parser() -> _Parser:
    parser = _Parser(prog="sspe", description=__doc__)
    parser.add_argument("--config", help="JSON file of defaults, same field names as the flags")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic correspondence dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--occ", default="0:0", help="occlusion range lo:hi or preset light|heavy")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=9)
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--angle-sigma", dest="angle_sigma", type=float, default=0.0)
    p.add_argument("--outlier-rate", dest="outlier_rate", type=float, default=0.0)
    p.add_argument("--pixel-jitter", dest="pixel_jitter", type=float, default=0.0)
    p.add_argument("--fx", type=float, default=600.0)
    p.add_argument("--fy", type=float, default=600.0)
    p.add_argument("--cx", type=float, default=320.0)
    p.add_argument("--cy", type=float, default=240.0)
    p.add_argument("--xy-extent", dest="xy_extent", type=float, default=0.06)
    p.add_argument("--z-range", dest="z_range", default="0.4:0.7")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("keypoints", help="farthest-point-sample 3D keypoints from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=9)
    p.add_argument("--start-rule", dest="start_rule", default="farthest-from-centroid",
                   choices=("farthest-from-centroid", "first-index"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_keypoints)

    p = sub.add_parser("train", help="train a pose-head variant on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", default="sspe-ours")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint with the ADD0.1d metric")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline", help="run the voting + RANSAC-PnP baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--hypotheses", type=int, default=128)
    p.add_argument("--inlier-cos", dest="inlier_cos", type=float, default=0.999)
    p.add_argument("--min-inlier-fraction", dest="min_inlier_fraction", type=float, default=0.25)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("ablate", help="train and evaluate several variants over several seeds")
    p.add_argument("--variants", default="sspe-r,sspe-rp,sspe-lc,sspe-ours")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0, help="base seed; run k uses seed+k")
    p.add_argument("--out", required=True)
    p.add_argument("--cluster-scenes", dest="cluster_scenes", type=int, default=0,
                   help="also report mean feature silhouette over this many test scenes")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("export-features", help="export pose-head features to CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=0, help="limit to the first k scenes (0 = all)")
    p.set_defaults(func=_cmd_export_features)
    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        if "--config" in argv:
            cfg_path = argv[argv.index("--config") + 1]
            overrides = jsonio.load(cfg_path)
            if not isinstance(overrides, dict):
                raise UsageError(f"--config {cfg_path} must hold a JSON object")
            for sp in parser._subparsers._group_actions[0].choices.values():
                for action in sp._actions:
                    if action.dest in overrides:
                        action.default = overrides[action.dest]
                        action.required = False
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except IndexError:
        print("--config requires a path", file=sys.stderr)
        return 1
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (SspeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
