"""Bilinear resampling with half-pixel-centered coordinate mapping.

Destination pixel centers map to source coordinates via
``src = (dst + 0.5) * (src_size / dst_size) - 0.5``, the convention used
by most image libraries' ``align_corners=False`` mode. Out-of-range
coordinates clamp to the border, so resizing a constant image yields the
same constant, and resizing to the identical size is an exact identity.
"""

from __future__ import annotations

import numpy as np


def _axis_coords(src_size: int, dst_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (low index, high index, high weight) for one axis."""
    scale = src_size / dst_size
    coords = (np.arange(dst_size, dtype=np.float64) + 0.5) * scale - 0.5
    coords = np.clip(coords, 0.0, src_size - 1.0)
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, src_size - 1)
    return lo, hi, (coords - lo).astype(np.float32)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize the last two axes of `img` to (out_h, out_w).

    Works on (H, W) grids and on channel-major (C, H, W) stacks alike.
    Returns float32.
    """
    if img.ndim < 2:
        raise ValueError(f"need at least 2 dimensions, got shape {img.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"invalid output size {out_h}x{out_w}")
    src_h, src_w = img.shape[-2], img.shape[-1]
    if src_h < 1 or src_w < 1:
        raise ValueError(f"empty source image {src_h}x{src_w}")

    img = np.asarray(img, dtype=np.float32)
    y0, y1, wy = _axis_coords(src_h, out_h)
    x0, x1, wx = _axis_coords(src_w, out_w)

    # gather the four neighbours; broadcasting keeps leading axes intact
    top = img[..., y0[:, None], x0[None, :]] * (1.0 - wx)[None, :] + \
        img[..., y0[:, None], x1[None, :]] * wx[None, :]
    bot = img[..., y1[:, None], x0[None, :]] * (1.0 - wx)[None, :] + \
        img[..., y1[:, None], x1[None, :]] * wx[None, :]
    out = top * (1.0 - wy)[:, None] + bot * wy[:, None]
    return out.astype(np.float32)
