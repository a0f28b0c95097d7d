"""Command-line surface: train / detect / evaluate / augment / synth / ced-plot."""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

import numpy as np

from . import augmentation, model_io, synthetic
from .cascade import CascadeConfig, detect_with_trace, train_dac_csr
from .evaluation import ErrorNormalization, ced_and_failure, normalized_error
from .geometry import Sample, Shape, shape_to_bbox
from .subspace import FuzzySchedule


def _parse_floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="daccsr",
        description="Cascaded shape regression landmark detector with dynamic "
                    "domain selection and fuzzy-weighted domain cascades.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a dataset manifest")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--out", required=True, help="output model file")
    p_train.add_argument("--bbox-stages", type=int, default=1, choices=(0, 1))
    p_train.add_argument("--general-stages", type=int, default=2)
    p_train.add_argument("--domain-stages", type=int, default=3)
    p_train.add_argument("--subspace-dim", type=int, default=2)
    p_train.add_argument("--ridge-lambda", type=float, default=10000.0)
    p_train.add_argument("--schedule", type=str, default="0.3,0.2,0.1",
                         help="comma-separated out-of-domain weights per domain stage")
    p_train.add_argument("--flip", action="store_true",
                         help="add vertically mirrored copies of the training set")
    p_train.add_argument("--blur-sigma", type=float, default=None,
                         help="add Gaussian-blurred copies with this sigma")
    p_train.add_argument("--synth-poses", type=int, default=0,
                         help="add this many synthesized poses per training image")
    p_train.add_argument("--bbox-jitter", type=int, default=0,
                         help="add this many perturbed-box copies per training sample")
    p_train.add_argument("--jitter-magnitude", type=float, default=0.05)
    p_train.add_argument("--seed", type=int, default=0)

    p_detect = sub.add_parser("detect", help="run landmark detection over a manifest")
    p_detect.add_argument("--model", required=True)
    p_detect.add_argument("--manifest", required=True)
    p_detect.add_argument("--out", required=True, help="output predictions CSV")
    p_detect.add_argument("--trace", default=None,
                          help="also write the per-stage domain labels to this CSV")

    p_eval = sub.add_parser("evaluate", help="score predictions against a manifest")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--predictions", required=True)
    p_eval.add_argument("--out", required=True, help="output report CSV")
    p_eval.add_argument("--failure-threshold", type=float, default=0.10)
    p_eval.add_argument("--normalization", choices=("face_size", "inter_ocular"),
                        default="face_size")
    p_eval.add_argument("--eye-indices", type=str, default=None,
                        help="two comma-separated landmark indices for inter_ocular mode")

    p_aug = sub.add_parser("augment", help="materialize an augmented dataset")
    p_aug.add_argument("--manifest", required=True)
    p_aug.add_argument("--out-dir", required=True)
    p_aug.add_argument("--out-manifest", required=True)
    p_aug.add_argument("--flip", action="store_true")
    p_aug.add_argument("--blur-sigma", type=float, default=None)
    p_aug.add_argument("--synth-poses", type=int, default=0)
    p_aug.add_argument("--bbox-jitter", type=int, default=0)
    p_aug.add_argument("--jitter-magnitude", type=float, default=0.05)
    p_aug.add_argument("--seed", type=int, default=0)

    p_synth = sub.add_parser("synth", help="generate the procedural benchmark dataset")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--out-manifest", required=True)
    p_synth.add_argument("--n-samples", type=int, required=True)
    p_synth.add_argument("--landmarks", type=int, default=19)
    p_synth.add_argument("--image-size", type=int, default=96)
    p_synth.add_argument("--latent-range", type=str, default="-0.6,0.6")
    p_synth.add_argument("--texture-noise", type=float, default=0.02)
    p_synth.add_argument("--box-jitter", type=float, default=0.05)
    p_synth.add_argument("--seed", type=int, default=0)

    p_plot = sub.add_parser("ced-plot", help="render a report CSV as an SVG curve")
    p_plot.add_argument("--report", required=True)
    p_plot.add_argument("--out", required=True)

    return parser


def _augment_samples(samples: List[Sample], mirror_map, flip: bool,
                     blur_sigma: Optional[float], synth_poses: int,
                     image_size) -> List[Sample]:
    out = list(samples)
    if flip:
        if mirror_map is None:
            raise ValueError("--flip requires a mirror_map in the manifest")
        out.extend(augmentation.flip_sample(s, mirror_map) for s in samples)
    if blur_sigma is not None:
        out.extend(
            Sample(image=augmentation.gaussian_blur(s.image, blur_sigma),
                   bbox=s.bbox, gt_shape=s.gt_shape)
            for s in samples
        )
    if synth_poses > 0:
        shapes = [s.gt_shape for s in samples if s.gt_shape is not None]
        if len(shapes) < 3:
            raise ValueError("--synth-poses needs at least 3 annotated samples")
        pose_model = augmentation.fit_pose_shape_model(shapes)
        for s in samples:
            if s.gt_shape is None:
                continue
            for new_shape in augmentation.pose_sweep(pose_model, s.gt_shape, synth_poses):
                mesh = augmentation.build_warp_mesh(
                    s.gt_shape, new_shape, (s.image.width, s.image.height))
                warped = augmentation.piecewise_affine_warp(s.image, mesh)
                out.append(Sample(image=warped, bbox=shape_to_bbox(new_shape),
                                  gt_shape=new_shape))
    return out


def _cmd_train(args) -> int:
    samples = model_io.load_dataset(args.manifest)
    manifest = model_io.load_manifest(args.manifest)
    samples = _augment_samples(samples, manifest.mirror_map, args.flip,
                               args.blur_sigma, args.synth_poses, None)
    schedule = FuzzySchedule(tuple(_parse_floats(args.schedule)))
    cfg = CascadeConfig(
        n_bbox_stages=args.bbox_stages,
        n_general_stages=args.general_stages,
        n_domain_stages=args.domain_stages,
        subspace_dim=args.subspace_dim,
        ridge_lambda=args.ridge_lambda,
        schedule=schedule,
    )
    model, report = train_dac_csr(samples, cfg, box_jitter=args.bbox_jitter,
                                  jitter_magnitude=args.jitter_magnitude, seed=args.seed)
    model_io.save_model(model, args.out)
    print(f"trained on {len(samples)} samples; "
          f"general error track: {[round(e, 5) for e in report.general_errors]}")
    print(f"model written to {args.out}")
    return 0


def _cmd_detect(args) -> int:
    model = model_io.load_model(args.model)
    samples = model_io.load_dataset(args.manifest)
    preds = np.empty((len(samples), 2 * model.n_landmarks))
    traces = np.empty((len(samples), model.config.n_domain_stages), dtype=np.int64)
    for i, sample in enumerate(samples):
        shape, trace = detect_with_trace(model, sample.image, sample.bbox)
        preds[i] = shape.points
        traces[i] = trace.domain_labels
    model_io.write_predictions_csv(preds, args.out)
    if args.trace is not None:
        model_io.write_trace_csv(traces, args.trace)
    print(f"wrote {len(samples)} predictions to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    manifest = model_io.load_manifest(args.manifest)
    samples = model_io.load_dataset(args.manifest)
    preds = model_io.read_predictions_csv(args.predictions)
    if preds.shape[0] != len(samples):
        raise ValueError(
            f"{preds.shape[0]} predictions for {len(samples)} manifest entries"
        )
    if preds.shape[1] != 2 * manifest.n_landmarks:
        raise ValueError(
            f"predictions have {preds.shape[1] // 2} landmarks, "
            f"manifest declares {manifest.n_landmarks}"
        )
    eye_indices = None
    if args.eye_indices is not None:
        parts = [int(v) for v in args.eye_indices.split(",")]
        eye_indices = (parts[0], parts[1])
    norm = ErrorNormalization(mode=args.normalization, eye_indices=eye_indices)
    errors = []
    for i, sample in enumerate(samples):
        if sample.gt_shape is None:
            raise ValueError(f"manifest entry {i} has no landmarks; cannot evaluate")
        errors.append(normalized_error(Shape(preds[i]), sample.gt_shape, norm,
                                       shape_to_bbox(sample.gt_shape)))
    report = ced_and_failure(errors, failure_threshold=args.failure_threshold)
    model_io.write_report_csv(report, args.out)
    print(f"mean error: {report.mean_error:.5f}")
    print(f"failure rate (> {report.failure_threshold:.2f}): {report.failure_rate:.4f}")
    print(f"report written to {args.out}")
    return 0


def _cmd_augment(args) -> int:
    samples = model_io.load_dataset(args.manifest)
    manifest = model_io.load_manifest(args.manifest)
    augmented = _augment_samples(samples, manifest.mirror_map, args.flip,
                                 args.blur_sigma, args.synth_poses, None)
    if args.bbox_jitter > 0:
        from .cascade import expand_with_box_jitter

        augmented = expand_with_box_jitter(augmented, args.bbox_jitter,
                                           args.jitter_magnitude, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    entries = []
    for i, sample in enumerate(augmented):
        name = f"aug_{i:06d}.png"
        model_io.save_image(sample.image, os.path.join(args.out_dir, name))
        entries.append(model_io.ManifestEntry(
            image_path=name,
            box=(sample.bbox.x1, sample.bbox.y1, sample.bbox.x2, sample.bbox.y2),
            landmarks=None if sample.gt_shape is None else sample.gt_shape.points,
        ))
    out_manifest = model_io.DatasetManifest(
        n_landmarks=manifest.n_landmarks, entries=tuple(entries),
        mirror_map=manifest.mirror_map)
    model_io.save_manifest(out_manifest, args.out_manifest)
    print(f"wrote {len(entries)} samples to {args.out_dir}")
    return 0


def _cmd_synth(args) -> int:
    lo, hi = _parse_floats(args.latent_range)
    spec = synthetic.SyntheticSpec(
        n_samples=args.n_samples,
        n_landmarks=args.landmarks,
        image_size=args.image_size,
        pose_latent_range=(lo, hi),
        texture_noise=args.texture_noise,
        box_jitter=args.box_jitter,
        seed=args.seed,
    )
    dataset = synthetic.generate(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    entries = []
    for i, sample in enumerate(dataset.samples):
        name = f"synth_{i:06d}.png"
        model_io.save_image(sample.image, os.path.join(args.out_dir, name))
        entries.append(model_io.ManifestEntry(
            image_path=name,
            box=(sample.bbox.x1, sample.bbox.y1, sample.bbox.x2, sample.bbox.y2),
            landmarks=sample.gt_shape.points,
        ))
    manifest = model_io.DatasetManifest(
        n_landmarks=spec.n_landmarks, entries=tuple(entries),
        mirror_map=dataset.mirror_map)
    model_io.save_manifest(manifest, args.out_manifest)
    print(f"wrote {len(entries)} samples to {args.out_dir}")
    return 0


def _cmd_ced_plot(args) -> int:
    report = model_io.read_report_csv(args.report)
    model_io.write_ced_svg(report["ced_thresholds"], report["ced_fractions"], args.out)
    print(f"plot written to {args.out}")
    return 0


_HANDLERS = {
    "train": _cmd_train,
    "detect": _cmd_detect,
    "evaluate": _cmd_evaluate,
    "augment": _cmd_augment,
    "synth": _cmd_synth,
    "ced-plot": _cmd_ced_plot,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Parse and run one command; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return _HANDLERS[args.command](args)
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
