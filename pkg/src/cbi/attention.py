"""Co-localization attention mask from per-biomarker foreground density."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch
from .filtering import closing, remove_small_components
from .raster import GrayImage, RasterImage, TileGrid, map_tiles

TINT_ALPHA = 0.35


@dataclass(frozen=True)
class AttentionConfig:
    window: int = 65
    thresholds: tuple[float, ...] = (0.05, 0.05)
    close_radius: int = 3
    min_region_area: int = 500

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be an odd positive integer")
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if not all(0.0 <= t <= 1.0 for t in self.thresholds):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.close_radius < 0 or self.min_region_area < 0:
            raise ValueError("close_radius and min_region_area must be >= 0")

    def thresholds_for(self, n: int) -> tuple[float, ...]:
        """One threshold per biomarker; a single value is broadcast."""
        if len(self.thresholds) == n:
            return self.thresholds
        if len(self.thresholds) == 1:
            return self.thresholds * n
        raise DimensionMismatch(f"{len(self.thresholds)} thresholds for {n} biomarkers")

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "thresholds": list(self.thresholds),
            "close_radius": self.close_radius,
            "min_region_area": self.min_region_area,
        }


@dataclass(frozen=True, eq=False)
class AttentionMask:
    mask: np.ndarray
    config: AttentionConfig
    raw: np.ndarray = field(default=None, repr=False)  # thresholded, before morphology


def summed_area_table(mask: np.ndarray) -> np.ndarray:
    """(H+1, W+1) int64 table with a zero first row and column."""
    sat = np.zeros((mask.shape[0] + 1, mask.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(mask, axis=0, dtype=np.int64), axis=1, out=sat[1:, 1:])
    return sat


def _box_density(sat: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape, half: int) -> np.ndarray:
    h, w = shape
    r0 = np.clip(rows - half, 0, h)[:, None]
    r1 = np.clip(rows + half + 1, 0, h)[:, None]
    c0 = np.clip(cols - half, 0, w)[None, :]
    c1 = np.clip(cols + half + 1, 0, w)[None, :]
    count = sat[r1, c1] - sat[r0, c1] - sat[r1, c0] + sat[r0, c0]
    return count / ((r1 - r0) * (c1 - c0))


def density_map(gray: GrayImage | np.ndarray, window: int, grid: TileGrid | None = None, workers: int = 1) -> np.ndarray:
    """Foreground fraction in a ``window`` x ``window`` box, clipped at borders.

    Accepts a gray image (foreground = gray < 255) or a boolean mask.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be an odd positive integer")
    mask = gray.foreground if isinstance(gray, GrayImage) else np.asarray(gray, dtype=bool)
    sat = summed_area_table(mask)
    half = window // 2
    h, w = mask.shape
    if grid is None:
        return _box_density(sat, np.arange(h), np.arange(w), mask.shape, half)

    def run(_tile, rect):
        x0, y0, x1, y1 = rect.padded
        return _box_density(sat, np.arange(y0, y1), np.arange(x0, x1), mask.shape, half)

    return map_tiles(run, mask, TileGrid(grid.tile_size, 0), workers)


def co_localize(densities: Sequence[np.ndarray], config: AttentionConfig) -> AttentionMask:
    """Pixels where every biomarker's density reaches its threshold, then closed and area-filtered."""
    if not densities:
        raise ValueError("need at least one density map")
    shape = densities[0].shape
    for i, d in enumerate(densities):
        if d.shape != shape:
            raise DimensionMismatch(f"density {i} has shape {d.shape}, expected {shape}")
    thresholds = config.thresholds_for(len(densities))
    raw = np.ones(shape, dtype=bool)
    for d, t in zip(densities, thresholds):
        raw &= d >= t
    mask = closing(raw, config.close_radius)
    mask = remove_small_components(mask, config.min_region_area)
    return AttentionMask(mask, config, raw)


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with a 4-neighbour outside the mask (an 8-connected 1-px ring)."""
    cross = ndimage.generate_binary_structure(2, 1)
    return mask & ~ndimage.binary_erosion(mask, structure=cross, border_value=0)


def overlay_mask(base: RasterImage, mask: np.ndarray, style: str = "contour", color=(0, 255, 0)) -> RasterImage:
    if mask.shape != (base.height, base.width):
        raise DimensionMismatch(f"mask {mask.shape[::-1]} vs base {base.dims}")
    out = base.pixels.copy()
    color = np.asarray(color, dtype=np.float64)
    if style == "contour":
        out[mask_boundary(mask)] = color.astype(np.uint8)
    elif style == "tint":
        sel = mask.astype(bool)
        blended = (1 - TINT_ALPHA) * out[sel].astype(np.float64) + TINT_ALPHA * color
        out[sel] = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    else:
        raise ValueError("style must be 'contour' or 'tint'")
    return RasterImage(out)
