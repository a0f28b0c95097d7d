"""Procedural landmark dataset with known ground truth.

Each sample draws a pose latent; landmarks are a closed-form function of the
latent (horizontal foreshortening that mimics yaw on a template point set).
The raster shows a distinct oriented sinusoidal blob at every landmark over a
smooth textured background, so gradient-histogram features carry enough
signal to learn the regression.  Everything derives deterministically from
(seed, sample index).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .geometry import BoundingBox, GrayImage, Sample, Shape, shape_to_bbox

_DEPTH_RADIUS = 1.1      # virtual cylinder radius for the yaw foreshortening
_FACE_SCALE = 0.58       # face extent as a fraction of the image side
_BLOB_SIGMA = 4.2        # envelope of the landmark patterns, in pixels
_BLOB_AMPLITUDE = 0.38
_BACKGROUND_AMPLITUDE = 0.10
_BIMODAL_GAP = 0.2       # fraction of each side left empty around zero pose


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int
    n_landmarks: int = 19
    image_size: int = 96
    pose_latent_range: Tuple[float, float] = (-0.6, 0.6)
    texture_noise: float = 0.02
    box_jitter: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.n_landmarks < 3:
            raise ValueError("need at least 3 landmarks")
        if self.image_size < 32:
            raise ValueError("image_size must be at least 32")
        lo, hi = self.pose_latent_range
        if not lo < hi:
            raise ValueError("pose_latent_range must be a nonempty interval")
        if self.texture_noise < 0 or not 0.0 <= self.box_jitter < 0.5:
            raise ValueError("invalid noise levels")


@dataclass(frozen=True)
class SyntheticDataset:
    samples: list
    latents: np.ndarray
    mirror_map: np.ndarray


_FACE_TEMPLATE = np.array([
    # left brow, right brow
    [-0.75, -0.65], [-0.55, -0.70], [-0.35, -0.65],
    [0.35, -0.65], [0.55, -0.70], [0.75, -0.65],
    # left eye, right eye
    [-0.70, -0.35], [-0.50, -0.33], [-0.30, -0.35],
    [0.30, -0.35], [0.50, -0.33], [0.70, -0.35],
    # nose
    [-0.20, 0.10], [0.00, 0.18], [0.20, 0.10],
    # mouth
    [-0.35, 0.52], [0.00, 0.58], [0.35, 0.52],
    # chin
    [0.00, 0.92],
])

_FACE_MIRROR_MAP = np.array([5, 4, 3, 2, 1, 0, 11, 10, 9, 8, 7, 6,
                             14, 13, 12, 17, 16, 15, 18])


def template_points(n_landmarks: int) -> np.ndarray:
    """Canonical template in [-1, 1]^2, symmetric about the vertical axis."""
    if n_landmarks == 19:
        return _FACE_TEMPLATE.copy()
    pts = np.zeros((n_landmarks, 2))
    n_pairs = n_landmarks // 2
    for j in range(n_pairs):
        frac = j / max(n_pairs - 1, 1)
        u = 0.25 + 0.55 * frac
        v = -0.75 + 1.5 * frac
        pts[2 * j] = (-u, v)
        pts[2 * j + 1] = (u, v)
    if n_landmarks % 2 == 1:
        pts[-1] = (0.0, 0.85)
    return pts


def mirror_map(n_landmarks: int) -> np.ndarray:
    """Involutive landmark permutation matching :func:`template_points`."""
    if n_landmarks == 19:
        return _FACE_MIRROR_MAP.copy()
    perm = np.arange(n_landmarks)
    for j in range(n_landmarks // 2):
        perm[2 * j], perm[2 * j + 1] = 2 * j + 1, 2 * j
    return perm


def shape_for_latent(spec: SyntheticSpec, latent: float, center: Tuple[float, float],
                     half_extent: float) -> Shape:
    """Closed-form landmark positions for one pose latent.

    Template x-positions are treated as points on a cylinder of radius
    ``_DEPTH_RADIUS`` and rotated by ``latent`` radians before projection, so
    x maps to R*sin(asin(u/R) + latent) while y is untouched.
    """
    pts = template_points(spec.n_landmarks)
    theta = np.arcsin(pts[:, 0] / _DEPTH_RADIUS)
    x = _DEPTH_RADIUS * np.sin(theta + latent)
    out = np.empty_like(pts)
    out[:, 0] = center[0] + x * half_extent
    out[:, 1] = center[1] + pts[:, 1] * half_extent
    return Shape(out.ravel())


def _draw_latent(rng: np.random.Generator, lo: float, hi: float) -> float:
    """Pose latent; two-sided (left/right) clusters when the range spans zero."""
    if lo < 0.0 < hi:
        if rng.integers(2) == 1:
            return float(rng.uniform(_BIMODAL_GAP * hi, hi))
        return float(rng.uniform(lo, _BIMODAL_GAP * lo))
    return float(rng.uniform(lo, hi))


def _render(spec: SyntheticSpec, shape: Shape, rng: np.random.Generator) -> np.ndarray:
    size = spec.image_size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    # smooth background: ramp plus two random low-frequency waves
    gdir = rng.uniform(0.0, 2.0 * np.pi)
    img = 0.5 + 0.08 * ((np.cos(gdir) * xx + np.sin(gdir) * yy) / size - 0.5)
    for _ in range(2):
        wdir = rng.uniform(0.0, 2.0 * np.pi)
        freq = rng.uniform(0.5, 1.5) / size
        phase = rng.uniform(0.0, 2.0 * np.pi)
        img += _BACKGROUND_AMPLITUDE * 0.5 * np.sin(
            2.0 * np.pi * freq * (np.cos(wdir) * xx + np.sin(wdir) * yy) + phase)

    # one oriented blob per landmark, orientation and frequency fixed per index
    window = int(np.ceil(3.0 * _BLOB_SIGMA))
    pts = shape.as_points()
    n = spec.n_landmarks
    for i in range(n):
        cx, cy = pts[i]
        alpha = np.pi * i / n
        freq = 0.20 + 0.06 * (i % 3)
        x_lo = max(int(np.floor(cx)) - window, 0)
        x_hi = min(int(np.ceil(cx)) + window, size - 1)
        y_lo = max(int(np.floor(cy)) - window, 0)
        y_hi = min(int(np.ceil(cy)) + window, size - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        lx = xx[y_lo:y_hi + 1, x_lo:x_hi + 1] - cx
        ly = yy[y_lo:y_hi + 1, x_lo:x_hi + 1] - cy
        envelope = np.exp(-(lx * lx + ly * ly) / (2.0 * _BLOB_SIGMA ** 2))
        carrier = np.cos(2.0 * np.pi * freq * (np.cos(alpha) * lx + np.sin(alpha) * ly))
        img[y_lo:y_hi + 1, x_lo:x_hi + 1] += _BLOB_AMPLITUDE * envelope * carrier

    if spec.texture_noise > 0:
        img += rng.uniform(-spec.texture_noise, spec.texture_noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _generate_one(spec: SyntheticSpec, index: int) -> Tuple[Sample, float]:
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, index)))
    lo, hi = spec.pose_latent_range
    latent = _draw_latent(rng, lo, hi)
    size = spec.image_size
    half_extent = 0.5 * _FACE_SCALE * size * rng.uniform(0.92, 1.08)
    center = (
        size / 2.0 + rng.uniform(-0.04, 0.04) * size,
        size / 2.0 + rng.uniform(-0.04, 0.04) * size,
    )
    shape = shape_for_latent(spec, latent, center, half_extent)
    image = GrayImage(_render(spec, shape, rng))
    tight = shape_to_bbox(shape)
    if spec.box_jitter > 0:
        noise = rng.uniform(-spec.box_jitter, spec.box_jitter, size=4)
        box = BoundingBox(
            tight.x1 + noise[0] * tight.width,
            tight.y1 + noise[1] * tight.height,
            tight.x2 + noise[2] * tight.width,
            tight.y2 + noise[3] * tight.height,
        )
    else:
        box = tight
    return Sample(image=image, bbox=box, gt_shape=shape), latent


def generate(spec: SyntheticSpec) -> SyntheticDataset:
    """Materialize the dataset; bit-identical for identical specs."""
    samples = []
    latents = np.empty(spec.n_samples)
    for i in range(spec.n_samples):
        sample, latent = _generate_one(spec, i)
        samples.append(sample)
        latents[i] = latent
    latents.flags.writeable = False
    return SyntheticDataset(samples=samples, latents=latents,
                            mirror_map=mirror_map(spec.n_landmarks))
