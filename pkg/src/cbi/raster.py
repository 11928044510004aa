"""Raster data model, PNG/TIFF codecs and deterministic tiling."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionMismatch, IoError, UnsupportedFormat

WHITE = 255

_READ_SUFFIXES = {".png", ".tif", ".tiff"}
_EIGHT_BIT_MODES = {"RGB", "RGBA", "L", "LA", "P", "PA", "CMYK"}


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit RGB raster, row-major, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"expected uint8 (H, W, 3) array, got {px.dtype} {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("raster must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        return self.width, self.height

    @classmethod
    def blank(cls, width: int, height: int, fill=(WHITE, WHITE, WHITE)) -> "RasterImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[...] = np.asarray(fill, dtype=np.uint8)
        return cls(px)

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit gray raster, shape (height, width). 255 means background."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 2 or px.dtype != np.uint8:
            raise ValueError(f"expected uint8 (H, W) array, got {px.dtype} {px.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        return self.width, self.height

    @property
    def foreground(self) -> np.ndarray:
        return self.pixels < WHITE

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


# --------------------------------------------------------------------------- #
# codecs
# --------------------------------------------------------------------------- #


def _open(path) -> Image.Image:
    path = Path(path)
    if path.suffix.lower() not in _READ_SUFFIXES:
        raise UnsupportedFormat(f"{path}: unknown extension {path.suffix!r}")
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError as exc:
        raise IoError(f"{path}: no such file") from exc
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: unreadable or unsupported image") from exc
    except OSError as exc:
        # Pillow raises OSError for e.g. 48-bit RGB TIFFs it cannot unpack
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    if img.mode not in _EIGHT_BIT_MODES:
        raise UnsupportedFormat(f"{path}: mode {img.mode!r} is not 8 bits per channel")
    return img


def decode(path) -> RasterImage:
    """Read a PNG or TIFF into an RGB raster. Alpha is dropped."""
    img = _open(path)
    return RasterImage(np.array(img.convert("RGB"), dtype=np.uint8))


def decode_gray(path) -> GrayImage:
    img = _open(path)
    return GrayImage(np.array(img.convert("L"), dtype=np.uint8))


def _save(img: Image.Image, path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in _READ_SUFFIXES:
        raise UnsupportedFormat(f"{path}: unknown extension {path.suffix!r}")
    try:
        if suffix == ".png":
            img.save(path, format="PNG", optimize=False)
        else:
            img.save(path, format="TIFF", compression="tiff_deflate")
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def encode(image: RasterImage | GrayImage, path) -> None:
    mode = "RGB" if isinstance(image, RasterImage) else "L"
    _save(Image.fromarray(image.pixels, mode=mode), path)


def encode_mask(mask: np.ndarray, path) -> None:
    """Write a boolean mask as a 1-bit PNG (decodes to 0/255)."""
    _save(Image.fromarray(np.asarray(mask, dtype=bool)), path)


def decode_mask(path) -> np.ndarray:
    img = Image.open(path)
    return np.array(img.convert("L")) > 127


# --------------------------------------------------------------------------- #
# tiling
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class TileGrid:
    tile_size: int = 512
    overlap: int = 0

    def __post_init__(self):
        if self.tile_size < 1:
            raise ValueError("tile_size must be positive")
        if not 0 <= self.overlap < self.tile_size:
            raise ValueError("overlap must satisfy 0 <= overlap < tile_size")

    def with_overlap(self, overlap: int) -> "TileGrid":
        # window stages may need more context than a whole tile; keep the invariant
        return TileGrid(max(self.tile_size, overlap + 1), overlap)


@dataclass(frozen=True)
class TileRect:
    """Core region (owned pixels) plus the padded region actually read.

    Rectangles are half-open ``(x0, y0, x1, y1)`` in image pixels.
    """

    index: int
    core: tuple[int, int, int, int]
    padded: tuple[int, int, int, int]

    @property
    def core_in_padded(self) -> tuple[slice, slice]:
        x0, y0, x1, y1 = self.core
        px0, py0 = self.padded[:2]
        return slice(y0 - py0, y1 - py0), slice(x0 - px0, x1 - px0)


def tile_rects(width: int, height: int, grid: TileGrid) -> list[TileRect]:
    rects = []
    t, ov = grid.tile_size, grid.overlap
    for y0 in range(0, height, t):
        for x0 in range(0, width, t):
            x1, y1 = min(x0 + t, width), min(y0 + t, height)
            padded = (max(x0 - ov, 0), max(y0 - ov, 0), min(x1 + ov, width), min(y1 + ov, height))
            rects.append(TileRect(len(rects), (x0, y0, x1, y1), padded))
    return rects


def tiles(array: np.ndarray, grid: TileGrid) -> Iterator[tuple[TileRect, np.ndarray]]:
    """Yield ``(rect, view)`` pairs; each view spans the tile's padded region."""
    if isinstance(array, (RasterImage, GrayImage)):
        array = array.pixels
    height, width = array.shape[:2]
    for rect in tile_rects(width, height, grid):
        px0, py0, px1, py1 = rect.padded
        yield rect, array[py0:py1, px0:px1]


def stitch(results: Iterable[tuple[TileRect, np.ndarray]], full_dims: tuple[int, int]) -> np.ndarray:
    """Gather per-tile outputs (over padded regions) into one array.

    Only the core region of each tile is copied, so the order in which
    results arrive does not matter.
    """
    width, height = full_dims
    out = None
    covered = np.zeros((height, width), dtype=bool)
    for rect, arr in results:
        px0, py0, px1, py1 = rect.padded
        if arr.shape[:2] != (py1 - py0, px1 - px0):
            raise DimensionMismatch(
                f"tile {rect.index}: result shape {arr.shape[:2]} != padded region "
                f"{(py1 - py0, px1 - px0)}"
            )
        if out is None:
            out = np.empty((height, width) + arr.shape[2:], dtype=arr.dtype)
        x0, y0, x1, y1 = rect.core
        if x1 > width or y1 > height:
            raise DimensionMismatch(f"tile {rect.index} core {rect.core} outside {full_dims}")
        out[y0:y1, x0:x1] = arr[rect.core_in_padded]
        covered[y0:y1, x0:x1] = True
    if out is None or not covered.all():
        raise DimensionMismatch(f"tile results do not cover {width}x{height}")
    return out


def map_tiles(
    fn: Callable[[np.ndarray, TileRect], np.ndarray],
    array: np.ndarray,
    grid: TileGrid,
    workers: int = 1,
) -> np.ndarray:
    """Apply ``fn`` to every padded tile and stitch the cores back together.

    ``fn`` receives the padded tile and its rect and must return an array with
    the same leading (rows, cols) shape. Results are gathered by tile index,
    so the output does not depend on ``workers``.
    """
    height, width = array.shape[:2]
    pairs = list(tiles(array, grid))

    def run(pair):
        rect, view = pair
        return rect, fn(view, rect)

    if workers <= 1 or len(pairs) == 1:
        results = [run(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, pairs))
    return stitch(results, (width, height))
