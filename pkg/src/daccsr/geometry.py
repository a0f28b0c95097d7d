"""Geometry primitives: landmark shapes, bounding boxes, grayscale rasters, samples.

Coordinates are continuous (sub-pixel) doubles.  Pixel (ix, iy) of a raster is
centered at the integer position (ix, iy); rasters only enter the picture at
feature extraction and warping time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class DegenerateShapeError(ValueError):
    """Shape has zero extent along at least one axis."""


class InvalidBoxError(ValueError):
    """Bounding box with non-positive width or height."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Shape:
    """Ordered landmark coordinates, flattened as [x1, y1, ..., xL, yL]."""

    points: np.ndarray

    def __post_init__(self):
        pts = _readonly(np.asarray(self.points, dtype=np.float64).ravel())
        if pts.size % 2 != 0 or pts.size < 6:
            raise ValueError(f"shape needs an even number >= 6 of coordinates, got {pts.size}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("shape coordinates must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n_landmarks(self) -> int:
        return self.points.size // 2

    def as_points(self) -> np.ndarray:
        """(L, 2) view of the coordinates."""
        return self.points.reshape(-1, 2)

    @property
    def xs(self) -> np.ndarray:
        return self.points[0::2]

    @property
    def ys(self) -> np.ndarray:
        return self.points[1::2]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box given by the upper-left and lower-right corners."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidBoxError("box corners must be finite")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise InvalidBoxError(
                f"box must have positive extent, got ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def as_vector(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)


@dataclass(frozen=True)
class GrayImage:
    """Single-channel raster with intensities in [0, 1], row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise ValueError(f"pixel raster must be 2-D and non-empty, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixel values must be finite")
        if px.min() < -1e-9 or px.max() > 1.0 + 1e-9:
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", _readonly(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Sample:
    """One dataset entry: image, detection box, and (for training) annotations."""

    image: GrayImage
    bbox: BoundingBox
    gt_shape: Optional[Shape] = field(default=None)


def shape_to_bbox(shape: Shape) -> BoundingBox:
    """Tight axis-aligned bounds of the landmarks.

    Rejects shapes whose points are collinear along an axis (zero width or
    height), since downstream scaling would divide by zero.
    """
    xs, ys = shape.xs, shape.ys
    x1, x2 = float(xs.min()), float(xs.max())
    y1, y2 = float(ys.min()), float(ys.max())
    if x2 <= x1 or y2 <= y1:
        raise DegenerateShapeError("shape has zero extent; cannot form a bounding box")
    return BoundingBox(x1, y1, x2, y2)


def place_mean_shape(mean_shape: Shape, box: BoundingBox) -> Shape:
    """Translate and scale a reference shape so its tight bounds equal `box`.

    Scaling is independent per axis, so the shape touches all four box sides.
    """
    src = shape_to_bbox(mean_shape)
    sx = box.width / src.width
    sy = box.height / src.height
    xs = box.x1 + (mean_shape.xs - src.x1) * sx
    ys = box.y1 + (mean_shape.ys - src.y1) * sy
    out = np.empty_like(mean_shape.points)
    out[0::2] = xs
    out[1::2] = ys
    return Shape(out)


def apply_bbox_delta(box: BoundingBox, delta: np.ndarray) -> BoundingBox:
    """Corner-wise sum of a box and a length-4 adjustment vector.

    Raises InvalidBoxError when the adjusted box is inverted or has zero
    area, which signals refiner divergence to the caller.
    """
    d = np.asarray(delta, dtype=np.float64).ravel()
    if d.size != 4:
        raise ValueError(f"box delta must have 4 entries, got {d.size}")
    if not np.all(np.isfinite(d)):
        raise ValueError("box delta must be finite")
    return BoundingBox(box.x1 + d[0], box.y1 + d[1], box.x2 + d[2], box.y2 + d[3])


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion (0.299, 0.587, 0.114) of an (H, W, 3) array in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got {rgb.shape}")
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
