"""Pseudo-color fusion of filtered biomarker layers into one composite image."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import DimensionMismatch, DuplicateOrderIndex
from .raster import WHITE, GrayImage, RasterImage, TileGrid, map_tiles

MODES = ("replace", "blend")


@dataclass(frozen=True)
class Layer:
    gray: GrayImage
    color: tuple[int, int, int]
    order_index: int
    name: str = ""


def _check_layers(layers: Sequence[Layer], dims) -> tuple[int, int]:
    if dims is None:
        if not layers:
            raise DimensionMismatch("an empty layer list needs explicit dims")
        dims = layers[0].gray.dims
    for layer in layers:
        if layer.gray.dims != tuple(dims):
            raise DimensionMismatch(f"layer {layer.name or layer.order_index} is {layer.gray.dims}, expected {tuple(dims)}")
    seen = set()
    for layer in layers:
        if layer.order_index in seen:
            raise DuplicateOrderIndex(f"order_index {layer.order_index} used twice")
        seen.add(layer.order_index)
    return tuple(dims)


def _fold(grays: Sequence[np.ndarray], colors: np.ndarray, mode: str) -> np.ndarray:
    shape = grays[0].shape if grays else None
    canvas = np.full(shape + (3,), float(WHITE))
    for gray, color in zip(grays, colors):
        fg = gray < WHITE
        s = (WHITE - gray[fg].astype(np.float64)) / WHITE
        s = s[:, None]
        if mode == "replace":
            canvas[fg] = (1.0 - s) * WHITE + s * color
        else:
            canvas[fg] = (1.0 - s) * canvas[fg] + s * color
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def composite(
    layers: Sequence[Layer],
    mode: str = "replace",
    dims: tuple[int, int] | None = None,
    grid: TileGrid | None = None,
    workers: int = 1,
) -> RasterImage:
    """Stack layers bottom-up by ``order_index`` on a white canvas.

    A foreground pixel (gray <= 254) tints toward the layer color with
    strength ``s = (255 - gray) / 255``. ``replace`` mode paints
    ``(1 - s) * 255 + s * color`` over whatever is below; ``blend`` mixes
    ``(1 - s) * below + s * color``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    width, height = _check_layers(layers, dims)
    ordered = sorted(layers, key=lambda layer: layer.order_index)
    if not ordered:
        return RasterImage.blank(width, height)
    stack = np.stack([layer.gray.pixels for layer in ordered], axis=-1)
    colors = np.array([layer.color for layer in ordered], dtype=np.float64)

    def run(tile, _rect):
        return _fold([tile[..., i] for i in range(tile.shape[-1])], colors, mode)

    if grid is None:
        return RasterImage(run(stack, None))
    return RasterImage(map_tiles(run, stack, TileGrid(grid.tile_size, 0), workers))


def legend(layers: Sequence[Layer], swatch: int = 24, width: int = 220) -> RasterImage:
    """Color key: one swatch and label per layer, top to bottom in stacking order."""
    if not layers:
        raise ValueError("legend needs at least one layer")
    ordered = sorted(layers, key=lambda layer: layer.order_index)
    pad = 6
    height = pad + len(ordered) * (swatch + pad)
    img = Image.new("RGB", (width, height), (WHITE, WHITE, WHITE))
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    for i, layer in enumerate(ordered):
        y = pad + i * (swatch + pad)
        draw.rectangle([pad, y, pad + swatch - 1, y + swatch - 1], fill=tuple(layer.color), outline=(0, 0, 0))
        draw.text((2 * pad + swatch, y + swatch // 4), layer.name or f"layer {layer.order_index}", fill=(0, 0, 0), font=font)
    return RasterImage(np.array(img))


def legend_swatch_rows(layers: Sequence[Layer], swatch: int = 24) -> list[tuple[int, tuple[int, int, int]]]:
    """(top y, color) of each swatch as drawn by :func:`legend`."""
    ordered = sorted(layers, key=lambda layer: layer.order_index)
    return [(6 + i * (swatch + 6), tuple(layer.color)) for i, layer in enumerate(ordered)]
