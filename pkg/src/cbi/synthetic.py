"""Synthetic CD30/PAX5 slide pairs with a known co-expression region.

Stand-in for clinical whole-slide data: IHC rasters in a shared (H&E) frame
whose stained cells are colored from the six tissue classes, plus the
ground-truth overlap of the CD30-positive and PAX5-semi-positive regions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import RasterImage
from .samples import builtin_table

HE_BACKGROUND = (242, 214, 228)
HE_NUCLEUS = (110, 60, 150)


@dataclass(frozen=True)
class Blob:
    cx: float
    cy: float
    radius: float

    def mask(self, height: int, width: int) -> np.ndarray:
        yy, xx = np.ogrid[:height, :width]
        return (xx - self.cx) ** 2 + (yy - self.cy) ** 2 <= self.radius**2


@dataclass
class DemoSlides:
    he: RasterImage
    cd30: RasterImage
    pax5: RasterImage
    cd30_blobs: list[Blob]
    pax5_blobs: list[Blob]
    overlap: np.ndarray  # ground-truth co-expression region


def _class_color(rng, class_id: int, n: int, spread: float) -> np.ndarray:
    table = builtin_table()
    lo, hi = table.lows()[class_id], table.highs()[class_id]
    mid = (lo + hi) / 2.0
    vals = rng.normal(mid, spread, size=(n, 3))
    return np.clip(np.rint(vals), lo, hi).astype(np.uint8)


def _background(rng, height, width) -> np.ndarray:
    return _class_color(rng, 0, height * width, 4.0).reshape(height, width, 3)


def _cell_centers(rng, blob: Blob, spacing: float) -> np.ndarray:
    r = blob.radius
    grid = np.arange(-r, r + spacing, spacing)
    gx, gy = np.meshgrid(grid, grid)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    pts = pts + rng.uniform(-spacing / 4, spacing / 4, size=pts.shape)
    inside = np.hypot(pts[:, 0], pts[:, 1]) <= r
    return pts[inside] + (blob.cx, blob.cy)


def _paint_cells(rng, img: np.ndarray, centers, radii, colors, pixel_noise: float) -> None:
    h, w = img.shape[:2]
    for (cx, cy), rad, col in zip(centers, radii, colors):
        x0, x1 = int(max(cx - rad, 0)), int(min(cx + rad + 1, w))
        y0, y1 = int(max(cy - rad, 0)), int(min(cy + rad + 1, h))
        if x0 >= x1 or y0 >= y1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        disk = (xx - cx) ** 2 + (yy - cy) ** 2 <= rad * rad
        n = int(disk.sum())
        noise = rng.normal(0, pixel_noise, size=(n, 3))
        img[y0:y1, x0:x1][disk] = np.clip(np.rint(col + noise), 0, 255).astype(np.uint8)


def _scatter_nuclei(rng, img: np.ndarray, count: int, class_id: int | None, color=None) -> None:
    h, w = img.shape[:2]
    centers = np.stack([rng.uniform(0, w, count), rng.uniform(0, h, count)], axis=1)
    radii = rng.uniform(2.5, 4.5, count)
    if class_id is not None:
        colors = _class_color(rng, class_id, count, 8.0).astype(np.float64)
    else:
        colors = np.tile(np.asarray(color, dtype=np.float64), (count, 1))
    _paint_cells(rng, img, centers, radii, colors, 5.0)


def _stained_blob(rng, img, blob: Blob, classes, spacing=16.0) -> None:
    centers = _cell_centers(rng, blob, spacing)
    radii = rng.uniform(5.0, 7.0, len(centers))
    picks = rng.choice(classes, size=len(centers))
    colors = np.array([_class_color(rng, int(k), 1, 6.0)[0] for k in picks], dtype=np.float64)
    _paint_cells(rng, img, centers, radii, colors, 4.0)


def demo_layout(size: int) -> tuple[list[Blob], list[Blob]]:
    """Two isolated blobs per marker in the corners plus one overlapping pair in the middle."""
    s = float(size)
    big, small = 0.09 * s, 0.07 * s
    cd30 = [Blob(0.44 * s, 0.5 * s, big), Blob(0.2 * s, 0.2 * s, small), Blob(0.2 * s, 0.8 * s, small)]
    pax5 = [Blob(0.56 * s, 0.5 * s, big), Blob(0.8 * s, 0.2 * s, small), Blob(0.8 * s, 0.8 * s, small)]
    return cd30, pax5


def make_demo(size: int = 2048, seed: int = 0) -> DemoSlides:
    """Paint an H&E/CD30/PAX5 triple of ``size`` x ``size`` pixels.

    CD30 blobs hold light/medium/dark brown cells, PAX5 blobs medium brown
    only; both IHC images carry scattered blue counterstain nuclei.
    """
    rng = np.random.default_rng(seed)
    cd30_blobs, pax5_blobs = demo_layout(size)
    n_nuclei = max(1, size * size // 2000)

    he = np.empty((size, size, 3), dtype=np.uint8)
    he[...] = np.clip(np.rint(rng.normal(HE_BACKGROUND, 3.0, size=(size, size, 3))), 0, 255).astype(np.uint8)
    _scatter_nuclei(rng, he, n_nuclei * 2, None, HE_NUCLEUS)

    cd30 = _background(rng, size, size)
    _scatter_nuclei(rng, cd30, n_nuclei, 1)
    for blob in cd30_blobs:
        _stained_blob(rng, cd30, blob, (3, 4, 5))

    pax5 = _background(rng, size, size)
    _scatter_nuclei(rng, pax5, n_nuclei, 1)
    for blob in pax5_blobs:
        _stained_blob(rng, pax5, blob, (4,))

    cd30_region = np.zeros((size, size), dtype=bool)
    for blob in cd30_blobs:
        cd30_region |= blob.mask(size, size)
    pax5_region = np.zeros((size, size), dtype=bool)
    for blob in pax5_blobs:
        pax5_region |= blob.mask(size, size)

    return DemoSlides(
        he=RasterImage(he),
        cd30=RasterImage(cd30),
        pax5=RasterImage(pax5),
        cd30_blobs=cd30_blobs,
        pax5_blobs=pax5_blobs,
        overlap=cd30_region & pax5_region,
    )
