"""Test fixtures shared across modules."""

import numpy as np
from scipy import ndimage

from cbi.raster import RasterImage


def textured_image(rng, size=256, margin=40):
    """Smooth brownish texture on white, with a white border of ``margin`` px."""
    noise = ndimage.gaussian_filter(rng.normal(size=(size, size)), 3.0)
    noise = (noise - noise.min()) / np.ptp(noise)
    tissue = np.zeros((size, size), dtype=bool)
    tissue[margin:-margin, margin:-margin] = True
    level = np.where(tissue, 255 - 200 * noise, 255.0)
    rgb = np.stack([level, level * 0.8 + 20, level * 0.7 + 30], axis=-1)
    return RasterImage(np.clip(np.rint(rgb), 0, 255).astype(np.uint8))


def shifted(image, dx, dy):
    """Integer translation, exposed area filled with white."""
    src = image.pixels
    out = np.full_like(src, 255)
    h, w = src.shape[:2]
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = src[ys, xs]
    return RasterImage(out)
