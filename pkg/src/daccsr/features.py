"""HOG descriptors and the feature maps consumed by the cascade regressors.

Three maps are exposed:

* ``dense_box_features``: HOG of the (resized) image region inside a box,
  used alone by the bounding-box refiner.
* ``sparse_shape_features``: per-landmark multi-scale HOG patches,
  concatenated in landmark order.
* ``context_features``: dense map of the current shape's tight box followed
  by the sparse map, giving each regressor both global and local context.

The HOG variant is the classical one: centered [-1, 0, 1] gradients with
replicated borders, 9 unsigned orientation bins, bilinear vote interpolation
across both bins and cells, 2x2-cell blocks at one-cell stride, and L2-hys
block normalization (clip 0.2).  Feature length is a closed-form function of
the configuration and the landmark count, never of image content.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundingBox, GrayImage, Shape, shape_to_bbox
from .raster import crop_resize_batch, resize_region

_L2HYS_EPS = 1e-5
_L2HYS_CLIP = 0.2


@dataclass(frozen=True)
class HogConfig:
    cell_size: int = 10
    block_size: int = 2
    n_bins: int = 9
    signed: bool = False

    def __post_init__(self):
        if self.cell_size < 2:
            raise ValueError(f"cell_size must be >= 2, got {self.cell_size}")
        if self.block_size < 1:
            raise ValueError(f"block_size must be >= 1, got {self.block_size}")
        if self.n_bins < 2:
            raise ValueError(f"n_bins must be >= 2, got {self.n_bins}")

    def descriptor_length(self, height: int, width: int) -> int:
        """Length of the descriptor for a height x width raster."""
        ncy, ncx = height // self.cell_size, width // self.cell_size
        nby, nbx = ncy - self.block_size + 1, ncx - self.block_size + 1
        if nby < 1 or nbx < 1:
            raise ValueError(f"{height}x{width} image is smaller than one HOG block")
        return nby * nbx * self.block_size ** 2 * self.n_bins


@dataclass(frozen=True)
class FeatureConfig:
    """Geometry of the dense and sparse feature maps.

    ``radius_fraction`` sets the per-landmark patch radius as a fraction of
    the larger of the shape's width and height.  Each patch is resized to
    ``patch_size`` squared; its central ``inner_patch_size`` crop provides the
    second HOG scale.
    """

    dense_face_size: int = 100
    dense_hog: HogConfig = field(default_factory=lambda: HogConfig(10, 2, 9, False))
    patch_size: int = 30
    patch_hog: HogConfig = field(default_factory=lambda: HogConfig(10, 2, 9, False))
    inner_patch_size: int = 15
    inner_hog: HogConfig = field(default_factory=lambda: HogConfig(5, 2, 9, False))
    radius_fraction: float = 1.0 / 7.0

    def __post_init__(self):
        if not 0.0 < self.radius_fraction < 1.0:
            raise ValueError(f"radius_fraction must lie in (0, 1), got {self.radius_fraction}")
        if not 0 < self.inner_patch_size < self.patch_size:
            raise ValueError("inner_patch_size must be positive and smaller than patch_size")
        for name, size, hog_cfg in (
            ("dense_face_size", self.dense_face_size, self.dense_hog),
            ("patch_size", self.patch_size, self.patch_hog),
            ("inner_patch_size", self.inner_patch_size, self.inner_hog),
        ):
            if size % hog_cfg.cell_size != 0:
                raise ValueError(f"{name} ({size}) must be a multiple of its HOG cell size")

    def dense_dim(self) -> int:
        return self.dense_hog.descriptor_length(self.dense_face_size, self.dense_face_size)

    def landmark_dim(self) -> int:
        return (self.patch_hog.descriptor_length(self.patch_size, self.patch_size)
                + self.inner_hog.descriptor_length(self.inner_patch_size, self.inner_patch_size))

    def sparse_dim(self, n_landmarks: int) -> int:
        return n_landmarks * self.landmark_dim()

    def total_dim(self, n_landmarks: int) -> int:
        return self.dense_dim() + self.sparse_dim(n_landmarks)


def _hog_batch(stack: np.ndarray, cfg: HogConfig) -> np.ndarray:
    """HOG descriptors for a (B, H, W) stack; returns (B, descriptor_length)."""
    b, h, w = stack.shape
    cell, block, n_bins = cfg.cell_size, cfg.block_size, cfg.n_bins
    if h % cell != 0 or w % cell != 0:
        raise ValueError(f"image dimensions {h}x{w} must be multiples of cell size {cell}")
    ncy, ncx = h // cell, w // cell
    nby, nbx = ncy - block + 1, ncx - block + 1
    if nby < 1 or nbx < 1:
        raise ValueError(f"{h}x{w} image is smaller than one HOG block")

    # centered differences, borders replicated
    gx = np.empty_like(stack)
    gx[:, :, 1:-1] = stack[:, :, 2:] - stack[:, :, :-2]
    gx[:, :, 0] = stack[:, :, 1] - stack[:, :, 0]
    gx[:, :, -1] = stack[:, :, -1] - stack[:, :, -2]
    gy = np.empty_like(stack)
    gy[:, 1:-1, :] = stack[:, 2:, :] - stack[:, :-2, :]
    gy[:, 0, :] = stack[:, 1, :] - stack[:, 0, :]
    gy[:, -1, :] = stack[:, -1, :] - stack[:, -2, :]

    mag = np.hypot(gx, gy)
    period = 2.0 * np.pi if cfg.signed else np.pi
    ang = np.arctan2(gy, gx) % period
    fb = ang * (n_bins / period) - 0.5
    b0f = np.floor(fb)
    wb_hi = fb - b0f
    bin_lo = b0f.astype(np.int64) % n_bins
    bin_hi = (bin_lo + 1) % n_bins

    # bilinear spread over the 2x2 neighbouring cell centers
    def cell_coords(n_pix: int):
        f = (np.arange(n_pix) - (cell - 1) / 2.0) / cell
        lo = np.floor(f).astype(np.int64)
        return lo, f - lo

    cx_lo, wx_hi = cell_coords(w)
    cy_lo, wy_hi = cell_coords(h)

    hist = np.zeros(b * ncy * ncx * n_bins, dtype=np.float64)
    batch_base = (np.arange(b, dtype=np.int64) * ncy)[:, None, None]
    idx_chunks = []
    val_chunks = []
    for cy, wy in ((cy_lo, 1.0 - wy_hi), (cy_lo + 1, wy_hi)):
        ok_y = (cy >= 0) & (cy < ncy)
        for cx, wx in ((cx_lo, 1.0 - wx_hi), (cx_lo + 1, wx_hi)):
            ok = ok_y[:, None] & ((cx >= 0) & (cx < ncx))[None, :]
            if not ok.any():
                continue
            spatial_w = wy[:, None] * wx[None, :]
            cell_idx = (batch_base + cy[None, :, None]) * ncx + cx[None, None, :]
            for bins, wbin in ((bin_lo, 1.0 - wb_hi), (bin_hi, wb_hi)):
                vals = mag * wbin * spatial_w[None, :, :]
                idx = cell_idx * n_bins + bins
                keep = np.broadcast_to(ok[None, :, :], idx.shape)
                idx_chunks.append(idx[keep])
                val_chunks.append(vals[keep])
    np.add.at(hist, np.concatenate(idx_chunks), np.concatenate(val_chunks))
    hist = hist.reshape(b, ncy, ncx, n_bins)

    windows = np.lib.stride_tricks.sliding_window_view(hist, (block, block), axis=(1, 2))
    blocks = windows.transpose(0, 1, 2, 4, 5, 3).reshape(b, nby, nbx, block * block * n_bins)
    norms = np.sqrt(np.sum(blocks * blocks, axis=-1, keepdims=True) + _L2HYS_EPS ** 2)
    blocks = np.minimum(blocks / norms, _L2HYS_CLIP)
    norms = np.sqrt(np.sum(blocks * blocks, axis=-1, keepdims=True) + _L2HYS_EPS ** 2)
    blocks = blocks / norms
    return blocks.reshape(b, -1)


def hog(image: GrayImage, cfg: HogConfig) -> np.ndarray:
    """HOG descriptor of a whole raster whose sides are multiples of the cell size."""
    return _hog_batch(image.pixels[None, :, :], cfg)[0]


def _check_box_intersects(box: BoundingBox, image: GrayImage) -> None:
    # raster footprint is [-0.5, W - 0.5] x [-0.5, H - 0.5]
    if (box.x2 <= -0.5 or box.x1 >= image.width - 0.5
            or box.y2 <= -0.5 or box.y1 >= image.height - 0.5):
        raise ValueError("box lies entirely outside the image")


def dense_box_features(image: GrayImage, box: BoundingBox, cfg: FeatureConfig) -> np.ndarray:
    """HOG of the box region, resized to the dense face size (zero-padded crop)."""
    _check_box_intersects(box, image)
    size = cfg.dense_face_size
    patch = resize_region(image.pixels, (box.x1, box.y1, box.x2, box.y2), size, size)
    return _hog_batch(patch[None, :, :], cfg.dense_hog)[0]


def _sparse_features_array(pixels: np.ndarray, shape: Shape, cfg: FeatureConfig) -> np.ndarray:
    box = shape_to_bbox(shape)
    radius = cfg.radius_fraction * max(box.width, box.height)
    half = max(1, int(round(radius)))
    centers = np.rint(shape.as_points())
    patches = crop_resize_batch(pixels, centers, half, cfg.patch_size)
    patch_feats = _hog_batch(patches, cfg.patch_hog)
    off = (cfg.patch_size - cfg.inner_patch_size) // 2
    inner = patches[:, off:off + cfg.inner_patch_size, off:off + cfg.inner_patch_size]
    inner_feats = _hog_batch(inner, cfg.inner_hog)
    return np.concatenate([patch_feats, inner_feats], axis=1).ravel()


def sparse_shape_features(image: GrayImage, shape: Shape, cfg: FeatureConfig) -> np.ndarray:
    """Multi-scale per-landmark HOG patches, concatenated in landmark order.

    The patch radius is ``radius_fraction`` of the larger shape extent; patch
    centers are rounded to the nearest pixel and the crop side is forced even.
    """
    return _sparse_features_array(image.pixels, shape, cfg)


def context_features(image: GrayImage, shape: Shape, cfg: FeatureConfig) -> np.ndarray:
    """Dense features of the shape's tight box followed by the sparse features."""
    dense = dense_box_features(image, shape_to_bbox(shape), cfg)
    sparse = _sparse_features_array(image.pixels, shape, cfg)
    return np.concatenate([dense, sparse])
