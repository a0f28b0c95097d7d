"""Low-level raster sampling helpers.

Pixel (ix, iy) is centered at the integer coordinate (ix, iy), so a raster of
width W covers the continuous strip [-0.5, W - 0.5].  All sampling is
bilinear; positions outside the raster read virtual zero pixels.
"""

from __future__ import annotations

import numpy as np


def bilinear_sample(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample a 2-D raster at continuous positions, zero outside the raster.

    ``xs``/``ys`` may have any common broadcast shape; the result matches it.
    """
    h, w = pixels.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    ix0 = x0.astype(np.int64)
    iy0 = y0.astype(np.int64)

    out = np.zeros(np.broadcast(xs, ys).shape, dtype=np.float64)
    for dy, wy in ((0, (1.0 - fy)), (1, fy)):
        iy = iy0 + dy
        ok_y = (iy >= 0) & (iy < h)
        for dx, wx in ((0, (1.0 - fx)), (1, fx)):
            ix = ix0 + dx
            ok = ok_y & (ix >= 0) & (ix < w)
            vals = pixels[iy.clip(0, h - 1), ix.clip(0, w - 1)]
            out += np.where(ok, vals * wy * wx, 0.0)
    return out


def resize_region(pixels: np.ndarray, box: tuple, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of the continuous box region onto an out_h x out_w grid.

    Output pixel (j, i) reads the source at the center of its sub-cell of the
    box, so resampling the full pixel footprint back to the native resolution
    reproduces the raster exactly.
    """
    x1, y1, x2, y2 = box
    xs = x1 + (np.arange(out_w) + 0.5) * (x2 - x1) / out_w
    ys = y1 + (np.arange(out_h) + 0.5) * (y2 - y1) / out_h
    return bilinear_sample(pixels, xs[None, :], ys[:, None])


def crop_resize_batch(pixels: np.ndarray, centers: np.ndarray, half: int,
                      out_size: int) -> np.ndarray:
    """Crop a (2*half)^2 square around each center and resize to out_size^2.

    Centers are integer pixel positions, shape (n, 2) as (x, y).  Returns an
    (n, out_size, out_size) stack.  All crops share one sampling grid, offset
    per center.
    """
    size = 2 * half
    rel = -half + (np.arange(out_size) + 0.5) * size / out_size
    cx = centers[:, 0][:, None, None]
    cy = centers[:, 1][:, None, None]
    xs = cx + rel[None, None, :]
    ys = cy + rel[None, :, None]
    return bilinear_sample(pixels, xs, ys)
