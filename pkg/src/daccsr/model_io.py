"""Dataset manifests, model serialization, and report files.

The manifest is line-oriented JSON: a header object followed by one entry
object per line, so large datasets stream.  The model file is a small binary
container: magic + version, a JSON header describing the configuration and
array shapes, the raw little-endian float64 array payload, and a trailing
SHA-256 checksum.  Every writer goes through a temp-file-plus-rename so
interrupted runs never leave truncated files behind.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from .cascade import CascadeConfig, DacCsrModel
from .evaluation import EvalReport
from .features import FeatureConfig, HogConfig
from .geometry import BoundingBox, GrayImage, Sample, Shape, rgb_to_gray
from .regression import WeakRegressor
from .subspace import FuzzySchedule, ShapeSubspace

MANIFEST_FORMAT = "daccsr-manifest"
MANIFEST_VERSION = 1
MODEL_MAGIC = b"DACCSRM\x01"
MODEL_VERSION = 1


class ManifestError(ValueError):
    """Malformed or inconsistent dataset manifest."""


class ModelFileError(ValueError):
    """Corrupt, truncated, or incompatible model file."""


def _atomic_write_bytes(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: str, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    box: Tuple[float, float, float, float]
    landmarks: Optional[np.ndarray] = None


@dataclass(frozen=True)
class DatasetManifest:
    n_landmarks: int
    entries: Tuple[ManifestEntry, ...]
    mirror_map: Optional[np.ndarray] = None
    version: int = MANIFEST_VERSION

    def __post_init__(self):
        if self.mirror_map is not None:
            from .augmentation import validate_mirror_map

            perm = validate_mirror_map(self.mirror_map, self.n_landmarks)
            perm.flags.writeable = False
            object.__setattr__(self, "mirror_map", perm)
        for i, entry in enumerate(self.entries):
            if entry.landmarks is not None and entry.landmarks.size != 2 * self.n_landmarks:
                raise ManifestError(
                    f"entry {i} ({entry.image_path}): {entry.landmarks.size // 2} landmarks, "
                    f"manifest declares {self.n_landmarks}"
                )
        object.__setattr__(self, "entries", tuple(self.entries))


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    header = {
        "format": MANIFEST_FORMAT,
        "version": manifest.version,
        "n_landmarks": manifest.n_landmarks,
        "mirror_map": None if manifest.mirror_map is None else manifest.mirror_map.tolist(),
    }
    lines = [json.dumps(header)]
    for entry in manifest.entries:
        record = {
            "image": entry.image_path,
            "box": [float(v) for v in entry.box],
        }
        if entry.landmarks is not None:
            record["landmarks"] = [float(v) for v in entry.landmarks]
        lines.append(json.dumps(record))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def load_manifest(path: str) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ManifestError(f"{path}: empty manifest file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: malformed header line: {exc}") from exc
    if header.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"{path}: not a dataset manifest")
    if header.get("version") != MANIFEST_VERSION:
        raise ManifestError(
            f"{path}: manifest version {header.get('version')} is not supported "
            f"(expected {MANIFEST_VERSION})"
        )
    n_landmarks = int(header["n_landmarks"])
    mirror = header.get("mirror_map")
    entries: List[ManifestEntry] = []
    for i, line in enumerate(lines[1:]):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: entry {i}: malformed JSON: {exc}") from exc
        try:
            box = tuple(float(v) for v in record["box"])
            if len(box) != 4:
                raise ValueError("box must have 4 numbers")
            landmarks = record.get("landmarks")
            if landmarks is not None:
                landmarks = np.asarray(landmarks, dtype=np.float64)
                if landmarks.size != 2 * n_landmarks:
                    raise ValueError(
                        f"{landmarks.size // 2} landmarks, manifest declares {n_landmarks}"
                    )
            entries.append(ManifestEntry(image_path=str(record["image"]), box=box,
                                         landmarks=landmarks))
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(
                f"{path}: entry {i} ({record.get('image', '?')}): {exc}"
            ) from exc
    return DatasetManifest(n_landmarks=n_landmarks, entries=tuple(entries),
                           mirror_map=None if mirror is None else np.asarray(mirror))


def load_image(path: str) -> GrayImage:
    """PNG/JPEG loader with luma grayscale conversion."""
    with Image.open(path) as img:
        arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[2] == 4:
            arr = arr[:, :, :3]
        arr = rgb_to_gray(arr / 255.0)
    else:
        arr = arr / 255.0
    return GrayImage(arr)


def save_image(image: GrayImage, path: str) -> None:
    data = np.rint(image.pixels * 255.0).clip(0, 255).astype(np.uint8)
    buf = Image.fromarray(data, mode="L")
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        buf.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_dataset(manifest_path: str) -> List[Sample]:
    """Samples in manifest order; image paths resolve relative to the manifest."""
    manifest = load_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    samples = []
    for i, entry in enumerate(manifest.entries):
        full = entry.image_path
        if not os.path.isabs(full):
            full = os.path.join(base, full)
        try:
            image = load_image(full)
            box = BoundingBox(*entry.box)
            gt = None if entry.landmarks is None else Shape(entry.landmarks)
        except (OSError, ValueError) as exc:
            raise ManifestError(
                f"{manifest_path}: entry {i} ({entry.image_path}): {exc}"
            ) from exc
        samples.append(Sample(image=image, bbox=box, gt_shape=gt))
    return samples


# --- model file -----------------------------------------------------------

def _config_to_json(cfg: CascadeConfig) -> dict:
    f = cfg.feature_config

    def hog_dict(h: HogConfig) -> dict:
        return {"cell_size": h.cell_size, "block_size": h.block_size,
                "n_bins": h.n_bins, "signed": h.signed}

    return {
        "n_bbox_stages": cfg.n_bbox_stages,
        "n_general_stages": cfg.n_general_stages,
        "n_domain_stages": cfg.n_domain_stages,
        "subspace_dim": cfg.subspace_dim,
        "ridge_lambda": cfg.ridge_lambda,
        "schedule": list(cfg.schedule.values) if cfg.n_domain_stages > 0 else None,
        "feature_config": {
            "dense_face_size": f.dense_face_size,
            "dense_hog": hog_dict(f.dense_hog),
            "patch_size": f.patch_size,
            "patch_hog": hog_dict(f.patch_hog),
            "inner_patch_size": f.inner_patch_size,
            "inner_hog": hog_dict(f.inner_hog),
            "radius_fraction": f.radius_fraction,
        },
    }


def _config_from_json(data: dict) -> CascadeConfig:
    fc = data["feature_config"]

    def hog_cfg(d: dict) -> HogConfig:
        return HogConfig(cell_size=d["cell_size"], block_size=d["block_size"],
                         n_bins=d["n_bins"], signed=d["signed"])

    schedule = data["schedule"]
    return CascadeConfig(
        n_bbox_stages=data["n_bbox_stages"],
        n_general_stages=data["n_general_stages"],
        n_domain_stages=data["n_domain_stages"],
        subspace_dim=data["subspace_dim"],
        ridge_lambda=data["ridge_lambda"],
        schedule=FuzzySchedule(tuple(schedule)) if schedule else FuzzySchedule((0.3, 0.2, 0.1)),
        feature_config=FeatureConfig(
            dense_face_size=fc["dense_face_size"],
            dense_hog=hog_cfg(fc["dense_hog"]),
            patch_size=fc["patch_size"],
            patch_hog=hog_cfg(fc["patch_hog"]),
            inner_patch_size=fc["inner_patch_size"],
            inner_hog=hog_cfg(fc["inner_hog"]),
            radius_fraction=fc["radius_fraction"],
        ),
    )


def _model_arrays(model: DacCsrModel) -> List[Tuple[str, np.ndarray]]:
    arrays: List[Tuple[str, np.ndarray]] = [("mean_shape", model.mean_shape.points)]
    if model.bbox_refiner is not None:
        arrays.append(("bbox_refiner.A", model.bbox_refiner.A))
        arrays.append(("bbox_refiner.e", model.bbox_refiner.e))
    for i, reg in enumerate(model.general):
        arrays.append((f"general.{i}.A", reg.A))
        arrays.append((f"general.{i}.e", reg.e))
    if model.subspace is not None:
        arrays.append(("subspace.mean_shape", model.subspace.mean_shape))
        arrays.append(("subspace.eigvecs", model.subspace.eigvecs))
        arrays.append(("subspace.coeff_mean", model.subspace.coeff_mean))
        arrays.append(("subspace.coeff_std", model.subspace.coeff_std))
    for m, cascade in enumerate(model.domain_cascades):
        for n, reg in enumerate(cascade):
            arrays.append((f"domain.{m}.{n}.A", reg.A))
            arrays.append((f"domain.{m}.{n}.e", reg.e))
    return arrays


def save_model(model: DacCsrModel, path: str) -> None:
    """Binary dump of every stage; loading reproduces the arrays bit-exactly."""
    arrays = _model_arrays(model)
    header = {
        "model_version": MODEL_VERSION,
        "config": _config_to_json(model.config),
        "has_bbox_refiner": model.bbox_refiner is not None,
        "has_subspace": model.subspace is not None,
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MODEL_MAGIC, struct.pack("<I", len(header_bytes)), header_bytes]
    for _, arr in arrays:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    digest = hashlib.sha256(body).digest()
    _atomic_write_bytes(path, body + digest)


def load_model(path: str) -> DacCsrModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MODEL_MAGIC) + 4 + 32:
        raise ModelFileError(f"{path}: file too short to be a model file")
    if blob[:len(MODEL_MAGIC) - 1] != MODEL_MAGIC[:-1]:
        raise ModelFileError(f"{path}: not a model file (bad magic)")
    if blob[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelFileError(
            f"{path}: unsupported model format version {blob[len(MODEL_MAGIC) - 1]}"
        )
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFileError(f"{path}: checksum mismatch; the file is corrupt or truncated")
    offset = len(MODEL_MAGIC)
    (header_len,) = struct.unpack_from("<I", body, offset)
    offset += 4
    header = json.loads(body[offset:offset + header_len].decode("utf-8"))
    offset += header_len
    if header.get("model_version") != MODEL_VERSION:
        raise ModelFileError(
            f"{path}: unsupported model version {header.get('model_version')}"
        )
    arrays = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        arrays[name] = arr.reshape(shape).astype(np.float64)
    if offset != len(body):
        raise ModelFileError(f"{path}: trailing bytes after array payload")

    cfg = _config_from_json(header["config"])
    refiner = None
    if header["has_bbox_refiner"]:
        refiner = WeakRegressor(arrays["bbox_refiner.A"], arrays["bbox_refiner.e"])
    general = tuple(
        WeakRegressor(arrays[f"general.{i}.A"], arrays[f"general.{i}.e"])
        for i in range(cfg.n_general_stages)
    )
    sub = None
    if header["has_subspace"]:
        sub = ShapeSubspace(
            mean_shape=arrays["subspace.mean_shape"],
            eigvecs=arrays["subspace.eigvecs"],
            coeff_mean=arrays["subspace.coeff_mean"],
            coeff_std=arrays["subspace.coeff_std"],
        )
    cascades = tuple(
        tuple(WeakRegressor(arrays[f"domain.{m}.{n}.A"], arrays[f"domain.{m}.{n}.e"])
              for n in range(cfg.n_domain_stages))
        for m in range(cfg.n_domains)
    )
    return DacCsrModel(
        mean_shape=Shape(arrays["mean_shape"]),
        bbox_refiner=refiner,
        general=general,
        subspace=sub,
        domain_cascades=cascades,
        config=cfg,
    )


# --- predictions, reports, plots -------------------------------------------

def write_predictions_csv(predictions: np.ndarray, path: str) -> None:
    """One row per sample, 2L coordinate columns, full float64 precision."""
    preds = np.asarray(predictions, dtype=np.float64)
    lines = [",".join(f"{v:.17g}" for v in row) for row in preds]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_predictions_csv(path: str) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise ValueError(f"{path}: no predictions found")
    return np.asarray(rows, dtype=np.float64)


def write_trace_csv(labels: np.ndarray, path: str) -> None:
    """One row per sample: the domain label chosen before each domain stage."""
    lines = [",".join(str(int(v)) for v in row) for row in np.atleast_2d(labels)]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def write_report_csv(report: EvalReport, path: str) -> None:
    lines = [
        "kind,key,value",
        f"summary,mean_error,{report.mean_error:.17g}",
        f"summary,failure_threshold,{report.failure_threshold:.17g}",
        f"summary,failure_rate,{report.failure_rate:.17g}",
        f"summary,n_samples,{report.per_sample_errors.size}",
    ]
    for t, f in zip(report.ced_thresholds, report.ced_fractions):
        lines.append(f"ced,{t:.17g},{f:.17g}")
    for i, err in enumerate(report.per_sample_errors):
        lines.append(f"error,{i},{err:.17g}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_report_csv(path: str) -> dict:
    summary = {}
    ced = []
    errors = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("kind,"):
                continue
            kind, key, value = line.split(",")
            if kind == "summary":
                summary[key] = float(value)
            elif kind == "ced":
                ced.append((float(key), float(value)))
            elif kind == "error":
                errors.append(float(value))
    ced_arr = np.asarray(ced, dtype=np.float64)
    return {
        "summary": summary,
        "ced_thresholds": ced_arr[:, 0] if len(ced) else np.empty(0),
        "ced_fractions": ced_arr[:, 1] if len(ced) else np.empty(0),
        "errors": np.asarray(errors, dtype=np.float64),
    }


def write_ced_svg(thresholds: np.ndarray, fractions: np.ndarray, path: str,
                  width: int = 640, height: int = 480) -> None:
    """Standalone SVG polyline of the cumulative error distribution."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    fractions = np.asarray(fractions, dtype=np.float64)
    margin = 50
    span_x = max(float(thresholds.max()), 1e-12)
    xs = margin + (width - 2 * margin) * thresholds / span_x
    ys = height - margin - (height - 2 * margin) * fractions
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    svg = f"""<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">
  <rect width="{width}" height="{height}" fill="white"/>
  <line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>
  <line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>
  <text x="{width // 2}" y="{height - 12}" text-anchor="middle" font-size="14">normalized error threshold (max {span_x:.3g})</text>
  <text x="14" y="{height // 2}" text-anchor="middle" font-size="14" transform="rotate(-90 14 {height // 2})">fraction of samples</text>
  <polyline points="{points}" fill="none" stroke="#1f77b4" stroke-width="2"/>
</svg>
"""
    _atomic_write_text(path, svg)
