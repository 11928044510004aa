"""Per-biomarker pixel filter and binary morphology cleanup.

Morphology uses clipped windows: erosion and dilation only look at in-image
pixels under the structuring element, so neither opening nor closing is
biased by the image border.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .anfis import AnfisModel, classify_outputs, evaluate_batch
from .errors import ConfigError, IoError
from .raster import WHITE, GrayImage, RasterImage, TileGrid, map_tiles

FOREGROUND_MAX = 254
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class MorphConfig:
    open_radius: int = 1
    close_radius: int = 2
    min_component_area: int = 25

    def __post_init__(self):
        for name in ("open_radius", "close_radius", "min_component_area"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def context(self) -> int:
        """Pixels of context an open->close pass reads around each output pixel."""
        return 2 * (self.open_radius + self.close_radius)


@dataclass(frozen=True)
class BiomarkerProfile:
    name: str
    model: AnfisModel
    selected_classes: frozenset[int]
    overlay_color: tuple[int, int, int]
    order_index: int
    transform: object = None  # AffineTransform | None
    image_path: Path | None = None
    model_path: Path | None = None
    register: bool = False

    def __post_init__(self):
        object.__setattr__(self, "selected_classes", frozenset(int(c) for c in self.selected_classes))
        if not self.selected_classes or not self.selected_classes <= set(range(6)):
            raise ValueError(f"{self.name}: selected_classes must be a nonempty subset of 0..5")
        if len(self.overlay_color) != 3 or not all(0 <= c <= 255 for c in self.overlay_color):
            raise ValueError(f"{self.name}: overlay_color must be three values in 0-255")


def load_profile(path) -> BiomarkerProfile:
    """Read a profile JSON. Relative paths resolve against the profile's folder."""
    from .alignment import load_transform
    from .anfis import load_model

    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    missing = [k for k in ("name", "model_path", "selected_classes", "overlay_color", "order_index") if k not in doc]
    if missing:
        raise ConfigError(f"{path}: missing field(s) {missing}")
    base = path.parent
    model_path = base / doc["model_path"]
    try:
        model = load_model(model_path.read_text())
    except OSError as exc:
        raise IoError(f"{model_path}: {exc}") from exc
    transform = None
    if doc.get("transform_path"):
        transform = load_transform(base / doc["transform_path"])
    try:
        return BiomarkerProfile(
            name=str(doc["name"]),
            model=model,
            selected_classes=frozenset(doc["selected_classes"]),
            overlay_color=tuple(int(c) for c in doc["overlay_color"]),
            order_index=int(doc["order_index"]),
            transform=transform,
            image_path=base / doc["image_path"] if doc.get("image_path") else None,
            model_path=model_path,
            register=bool(doc.get("register", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------- #
# pixel filter
# --------------------------------------------------------------------------- #


def filter_pixels(rgb: np.ndarray, model: AnfisModel, selected_classes) -> np.ndarray:
    """Gray filter for an (..., 3) uint8 array; returns uint8 of shape (...)."""
    flat = rgb.reshape(-1, 3)
    # each distinct color is evaluated once; the result per color does not
    # depend on which other colors share the batch
    codes = (flat[:, 0].astype(np.uint32) << 16) | (flat[:, 1].astype(np.uint32) << 8) | flat[:, 2]
    uniq, inverse = np.unique(codes, return_inverse=True)
    colors = np.stack([(uniq >> 16) & 255, (uniq >> 8) & 255, uniq & 255], axis=1)
    out = evaluate_batch(model, colors)
    cls = classify_outputs(model, out)
    keep = np.isin(cls, sorted(selected_classes))
    gray = np.clip(np.rint(WHITE - out), 0, FOREGROUND_MAX).astype(np.uint8)
    gray[~keep] = WHITE
    return gray[inverse.ravel()].reshape(rgb.shape[:-1])


def filter_image(
    image: RasterImage,
    model: AnfisModel,
    selected_classes,
    grid: TileGrid | None = None,
    workers: int = 1,
) -> GrayImage:
    """Keep pixels whose class is selected; whiten the rest.

    A kept pixel is written as ``255 - o`` (``o`` the FIS output), clamped to
    0-254, so darker stain classes come out as darker gray. 255 is reserved
    for background.
    """
    selected = frozenset(selected_classes)
    if not selected or not selected <= set(range(len(model.class_targets))):
        raise ValueError("selected_classes must be a nonempty subset of the model's classes")
    if grid is None:
        return GrayImage(filter_pixels(image.pixels, model, selected))
    return GrayImage(map_tiles(lambda t, _r: filter_pixels(t, model, selected), image.pixels, grid, workers))


# --------------------------------------------------------------------------- #
# morphology
# --------------------------------------------------------------------------- #


def disc(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=disc(radius), border_value=0)


def erode(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=disc(radius), border_value=1)


def opening(mask: np.ndarray, radius: int) -> np.ndarray:
    return dilate(erode(mask, radius), radius)


def closing(mask: np.ndarray, radius: int) -> np.ndarray:
    return erode(dilate(mask, radius), radius)


def remove_small_components(mask: np.ndarray, min_area: int) -> np.ndarray:
    """Drop 8-connected components with fewer than ``min_area`` pixels."""
    if min_area <= 1:
        return mask.copy()
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return mask.copy()
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_area
    keep[0] = False
    return keep[labels]


def open_close(mask: np.ndarray, config: MorphConfig) -> np.ndarray:
    return closing(opening(mask, config.open_radius), config.close_radius)


def open_close_tiled(mask: np.ndarray, config: MorphConfig, grid: TileGrid, workers: int = 1) -> np.ndarray:
    if config.context == 0:
        return mask.copy()
    g = grid.with_overlap(max(grid.overlap, config.context))
    return map_tiles(lambda t, _r: open_close(t, config), mask, g, workers)


def finish_clean(gray: GrayImage, shaped: np.ndarray, config: MorphConfig) -> GrayImage:
    """Area filter + gray assignment on an already opened/closed mask."""
    original = gray.pixels
    fg = gray.foreground
    final = remove_small_components(shaped, config.min_component_area)
    out = np.full_like(original, WHITE)
    kept = final & fg
    out[kept] = original[kept]
    added = final & ~fg
    if added.any():
        labels, n = ndimage.label(final, structure=EIGHT_CONNECTED)
        idx = np.arange(1, n + 1)
        sums = ndimage.sum_labels(original.astype(np.float64), labels * kept, idx)
        counts = ndimage.sum_labels(kept, labels * kept, idx)
        means = np.full(n + 1, float(FOREGROUND_MAX))
        has = counts > 0
        means[1:][has] = sums[has] / counts[has]
        fill = np.clip(np.rint(means), 0, FOREGROUND_MAX).astype(np.uint8)
        out[added] = fill[labels[added]]
    return GrayImage(out)


def morph_clean(
    gray: GrayImage,
    config: MorphConfig,
    grid: TileGrid | None = None,
    workers: int = 1,
) -> GrayImage:
    """Open, close, then drop small 8-connected components.

    Surviving foreground keeps its gray level. Pixels added by closing take the
    rounded mean gray of the original foreground in their component.
    """
    mask = gray.foreground
    if grid is None:
        shaped = open_close(mask, config)
    else:
        shaped = open_close_tiled(mask, config, grid, workers)
    return finish_clean(gray, shaped, config)
