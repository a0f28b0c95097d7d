"""Training-set augmentation: 2D profile-pose synthesis, mesh warping, flips,
Gaussian blur, and bounding-box jitter.

Pose synthesis edits one PCA coefficient of a shape (the yaw axis) and
reconstructs; the texture is then carried over by a piecewise affine warp on
a Delaunay mesh of the landmarks plus fixed external anchor points, so the
image background stays put while the face region deforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.ndimage
import scipy.spatial

from .geometry import BoundingBox, GrayImage, Sample, Shape, shape_to_bbox
from .raster import bilinear_sample
from .subspace import ShapeSubspace, normalize_shape, project, reconstruct


@dataclass(frozen=True)
class PoseShapeModel:
    """Shape subspace fit on a pose-rich set, with the yaw axis singled out.

    ``yaw_axis`` is 1-based.  ``coeff_range`` holds the observed (min, max)
    of the training coefficients per axis, shape (K, 2); targets outside the
    yaw axis range are rejected as extrapolation.
    """

    subspace: ShapeSubspace
    coeff_range: np.ndarray
    yaw_axis: int = 1

    def __post_init__(self):
        if not 1 <= self.yaw_axis <= self.subspace.k:
            raise ValueError(f"yaw_axis must lie in [1, {self.subspace.k}], got {self.yaw_axis}")
        rng = np.asarray(self.coeff_range, dtype=np.float64)
        if rng.shape != (self.subspace.k, 2) or np.any(rng[:, 1] < rng[:, 0]):
            raise ValueError("coeff_range must be a (K, 2) array of (min, max) rows")
        rng = rng.copy()
        rng.flags.writeable = False
        object.__setattr__(self, "coeff_range", rng)


def fit_pose_shape_model(shapes, k: int = 2, yaw_axis: int = 1) -> PoseShapeModel:
    """Fit the pose subspace and record the observed coefficient ranges."""
    from .subspace import fit_shape_subspace

    vectors = np.stack([normalize_shape(s) for s in shapes])
    sub = fit_shape_subspace(vectors, k)
    coeffs = (vectors - sub.mean_shape) @ sub.eigvecs
    rng = np.stack([coeffs.min(axis=0), coeffs.max(axis=0)], axis=1)
    return PoseShapeModel(subspace=sub, yaw_axis=yaw_axis, coeff_range=rng)


_NEAR_FRONTAL_FRACTION = 0.05


def synthesize_pose_shape(model: PoseShapeModel, shape: Shape, target_coeff: float) -> Shape:
    """Shape with its yaw-axis coefficient replaced by ``target_coeff``.

    The shape is normalized to [0, 1] per axis, projected, the yaw
    coefficient swapped, reconstructed from the top-K basis, and mapped back
    through the inverse of the same normalization.  Targets must share the
    rotation direction of the input (sign relative to the coefficient mean)
    unless the input is near-frontal, and must stay inside the observed
    coefficient range.
    """
    sub = model.subspace
    axis = model.yaw_axis - 1
    lo, hi = model.coeff_range[axis]
    if not lo <= target_coeff <= hi:
        raise ValueError(
            f"target coefficient {target_coeff} outside the observed range [{lo}, {hi}]"
        )
    box = shape_to_bbox(shape)
    z = normalize_shape(shape)
    c = project(sub, z)
    current = c[axis] - sub.coeff_mean[axis]
    target_rel = target_coeff - sub.coeff_mean[axis]
    near_frontal = abs(current) <= _NEAR_FRONTAL_FRACTION * sub.coeff_std[axis]
    if not near_frontal and current * target_rel < 0:
        raise ValueError(
            "target coefficient flips the rotation direction of a non-frontal shape"
        )
    c = c.copy()
    c[axis] = target_coeff
    recon = reconstruct(sub, c)
    out = np.empty_like(recon)
    out[0::2] = box.x1 + recon[0::2] * box.width
    out[1::2] = box.y1 + recon[1::2] * box.height
    return Shape(out)


def pose_sweep(model: PoseShapeModel, shape: Shape, n_poses: int) -> list:
    """Evenly spaced pose targets from the current yaw coefficient to the range limit.

    Returns ``n_poses`` synthesized shapes sweeping toward the extreme pose on
    the shape's own rotation side (the positive side for near-frontal input).
    """
    sub = model.subspace
    axis = model.yaw_axis - 1
    c = project(sub, normalize_shape(shape))
    current = c[axis]
    lo, hi = model.coeff_range[axis]
    limit = hi if current >= sub.coeff_mean[axis] else lo
    targets = current + (np.arange(1, n_poses + 1) / n_poses) * (limit - current)
    return [synthesize_pose_shape(model, shape, float(t)) for t in targets]


@dataclass(frozen=True)
class WarpMesh:
    """Matched source/destination vertices with shared Delaunay topology."""

    vertices_src: np.ndarray  # (n, 2)
    vertices_dst: np.ndarray  # (n, 2)
    triangles: np.ndarray     # (t, 3) int indices into the vertex lists

    def __post_init__(self):
        src = np.asarray(self.vertices_src, dtype=np.float64)
        dst = np.asarray(self.vertices_dst, dtype=np.float64)
        tri = np.asarray(self.triangles, dtype=np.int64)
        if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
            raise ValueError("vertex lists must be matching (n, 2) arrays")
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise ValueError("triangles must be an (t, 3) index array")
        if tri.min(initial=0) < 0 or tri.max(initial=-1) >= src.shape[0]:
            raise ValueError("triangle indices out of range")
        areas = _triangle_areas(src, tri)
        if np.any(np.abs(areas) < 1e-12):
            raise ValueError("mesh contains a degenerate source triangle")
        for arr in (src, dst, tri):
            arr.flags.writeable = False
        object.__setattr__(self, "vertices_src", src)
        object.__setattr__(self, "vertices_dst", dst)
        object.__setattr__(self, "triangles", tri)


def _triangle_areas(verts: np.ndarray, tri: np.ndarray) -> np.ndarray:
    a = verts[tri[:, 0]]
    b = verts[tri[:, 1]]
    c = verts[tri[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def delaunay_triangles(points: np.ndarray) -> np.ndarray:
    """Delaunay triangle index triples for a point set."""
    pts = np.asarray(points, dtype=np.float64)
    try:
        tri = scipy.spatial.Delaunay(pts)
    except scipy.spatial.QhullError as exc:
        raise ValueError("cannot triangulate degenerate (collinear) points") from exc
    return np.asarray(tri.simplices, dtype=np.int64)


def _external_points(box: BoundingBox, width: int, height: int) -> np.ndarray:
    """Anchor points: corners and edge midpoints of the box inflated by 50%,
    clamped to the image, plus the four image corners."""
    cx, cy = (box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0
    hw, hh = 0.75 * box.width, 0.75 * box.height
    x1, x2 = cx - hw, cx + hw
    y1, y2 = cy - hh, cy + hh
    ring = np.array([
        [x1, y1], [cx, y1], [x2, y1],
        [x1, cy], [x2, cy],
        [x1, y2], [cx, y2], [x2, y2],
    ])
    ring[:, 0] = ring[:, 0].clip(0.0, width - 1.0)
    ring[:, 1] = ring[:, 1].clip(0.0, height - 1.0)
    corners = np.array([
        [0.0, 0.0], [width - 1.0, 0.0], [0.0, height - 1.0], [width - 1.0, height - 1.0],
    ])
    return np.vstack([ring, corners])


def build_warp_mesh(src_shape: Shape, dst_shape: Shape, image_size: tuple) -> WarpMesh:
    """Warp mesh from landmarks plus fixed-border anchors.

    External anchors move with the mean landmark displacement, scaled by
    their distance to the image border so the border itself stays fixed.
    Anchors that collide with other vertices are dropped before
    triangulating; triangle topology comes from the source vertices.
    """
    if src_shape.n_landmarks != dst_shape.n_landmarks:
        raise ValueError("source and destination shapes must have the same landmark count")
    width, height = image_size
    src_pts = src_shape.as_points()
    dst_pts = dst_shape.as_points()
    anchors = _external_points(shape_to_bbox(src_shape), width, height)

    mean_disp = (dst_pts - src_pts).mean(axis=0)
    border_dist = np.minimum(
        np.minimum(anchors[:, 0], width - 1.0 - anchors[:, 0]),
        np.minimum(anchors[:, 1], height - 1.0 - anchors[:, 1]),
    )
    falloff = np.clip(border_dist / (0.5 * min(width - 1.0, height - 1.0)), 0.0, 1.0)
    anchors_dst = anchors + falloff[:, None] * mean_disp[None, :]

    src_all = np.vstack([src_pts, anchors])
    dst_all = np.vstack([dst_pts, anchors_dst])
    keep = [True] * len(src_pts)
    for i in range(len(src_pts), len(src_all)):
        prior = src_all[:i][np.asarray(keep)]
        keep.append(bool(np.min(np.sum((prior - src_all[i]) ** 2, axis=1)) > 1e-12))
    keep = np.asarray(keep)
    return WarpMesh(src_all[keep], dst_all[keep], delaunay_triangles(src_all[keep]))


def triangle_affine(src_tri: np.ndarray, dst_tri: np.ndarray) -> np.ndarray:
    """2x3 affine matrix mapping the three source points onto the destination."""
    src = np.asarray(src_tri, dtype=np.float64)
    dst = np.asarray(dst_tri, dtype=np.float64)
    g = np.hstack([src, np.ones((3, 1))])
    sol = np.linalg.solve(g, dst)
    return sol.T


def piecewise_affine_warp(image: GrayImage, mesh: WarpMesh) -> GrayImage:
    """Map texture through the mesh: each destination triangle pulls from its
    source triangle via the inverse affine map, sampled bilinearly.

    Pixels outside every destination triangle copy the source pixel.  A
    triangle whose vertices did not move copies its pixels verbatim, so the
    identity mesh reproduces the raster bit-exactly.
    """
    pixels = image.pixels
    h, w = pixels.shape
    out = pixels.copy()
    for tri in mesh.triangles:
        dst_tri = mesh.vertices_dst[tri]
        src_tri = mesh.vertices_src[tri]
        x_lo = max(int(np.ceil(dst_tri[:, 0].min())), 0)
        x_hi = min(int(np.floor(dst_tri[:, 0].max())), w - 1)
        y_lo = max(int(np.ceil(dst_tri[:, 1].min())), 0)
        y_hi = min(int(np.floor(dst_tri[:, 1].max())), h - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        gx, gy = np.meshgrid(np.arange(x_lo, x_hi + 1), np.arange(y_lo, y_hi + 1))
        # barycentric coordinates w.r.t. the destination triangle
        t = np.array([
            [dst_tri[0, 0] - dst_tri[2, 0], dst_tri[1, 0] - dst_tri[2, 0]],
            [dst_tri[0, 1] - dst_tri[2, 1], dst_tri[1, 1] - dst_tri[2, 1]],
        ])
        det = t[0, 0] * t[1, 1] - t[0, 1] * t[1, 0]
        if abs(det) < 1e-12:
            continue
        dx = gx - dst_tri[2, 0]
        dy = gy - dst_tri[2, 1]
        l0 = (t[1, 1] * dx - t[0, 1] * dy) / det
        l1 = (-t[1, 0] * dx + t[0, 0] * dy) / det
        l2 = 1.0 - l0 - l1
        inside = (l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9)
        if not inside.any():
            continue
        ys, xs = np.nonzero(inside)
        rows = ys + y_lo
        cols = xs + x_lo
        if np.array_equal(src_tri, dst_tri):
            out[rows, cols] = pixels[rows, cols]
            continue
        sx = l0[inside] * src_tri[0, 0] + l1[inside] * src_tri[1, 0] + l2[inside] * src_tri[2, 0]
        sy = l0[inside] * src_tri[0, 1] + l1[inside] * src_tri[1, 1] + l2[inside] * src_tri[2, 1]
        out[rows, cols] = bilinear_sample(pixels, sx, sy)
    return GrayImage(np.clip(out, 0.0, 1.0))


def validate_mirror_map(mirror_map, n_landmarks: int) -> np.ndarray:
    """Check that the map is an involutive permutation of [0, L)."""
    perm = np.asarray(mirror_map, dtype=np.int64).ravel()
    if perm.size != n_landmarks:
        raise ValueError(f"mirror map length {perm.size} does not match {n_landmarks} landmarks")
    if sorted(perm.tolist()) != list(range(n_landmarks)):
        raise ValueError("mirror map must be a permutation of the landmark indices")
    if not np.array_equal(perm[perm], np.arange(n_landmarks)):
        raise ValueError("mirror map must be involutive (its own inverse)")
    return perm


def flip_sample(sample: Sample, mirror_map) -> Sample:
    """Mirror image, landmarks, and box about the vertical axis.

    Landmark slot i of the output takes the mirrored position of input
    landmark mirror_map[i], so left/right feature pairs swap places.
    """
    img = sample.image
    perm = validate_mirror_map(mirror_map, _landmark_count(sample))
    flipped = GrayImage(np.ascontiguousarray(img.pixels[:, ::-1]))
    w = img.width
    box = sample.bbox
    new_box = BoundingBox(w - 1.0 - box.x2, box.y1, w - 1.0 - box.x1, box.y2)
    new_shape = None
    if sample.gt_shape is not None:
        pts = sample.gt_shape.as_points()[perm].copy()
        pts[:, 0] = w - 1.0 - pts[:, 0]
        new_shape = Shape(pts.ravel())
    return Sample(image=flipped, bbox=new_box, gt_shape=new_shape)


def _landmark_count(sample: Sample) -> int:
    if sample.gt_shape is None:
        raise ValueError("flipping requires a ground-truth shape to carry the landmark count")
    return sample.gt_shape.n_landmarks


def gaussian_blur(image: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), reflected borders."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= kernel.sum()
    blurred = scipy.ndimage.correlate1d(image.pixels, kernel, axis=0, mode="mirror")
    blurred = scipy.ndimage.correlate1d(blurred, kernel, axis=1, mode="mirror")
    return GrayImage(np.clip(blurred, 0.0, 1.0))


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """The normalized kernel used by gaussian_blur, exposed for verification."""
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def perturb_bbox(box: BoundingBox, rng_seed: int, magnitude: float = 0.05) -> BoundingBox:
    """Jitter each corner by uniform noise up to magnitude x the box side."""
    if not 0.0 <= magnitude < 0.5:
        raise ValueError(f"magnitude must lie in [0, 0.5), got {magnitude}")
    if magnitude == 0.0:
        return box
    rng = np.random.default_rng(rng_seed)
    noise = rng.uniform(-magnitude, magnitude, size=4)
    return BoundingBox(
        box.x1 + noise[0] * box.width,
        box.y1 + noise[1] * box.height,
        box.x2 + noise[2] * box.width,
        box.y2 + noise[3] * box.height,
    )
