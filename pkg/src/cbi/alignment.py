"""Affine warping into the reference frame and a coarse rigid estimator.

Coordinates are ``(x, y)`` = (column, row) in pixels. A transform maps source
coordinates to reference (target) coordinates; warping inverse-maps every
output pixel with bilinear interpolation and fills uncovered pixels white.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInput, IoError, ParseError, SingularTransform
from .raster import WHITE, RasterImage, TileGrid, map_tiles

DET_EPS = 1e-9
EDGE_EPS = 1e-6


@dataclass(frozen=True)
class AffineTransform:
    """``(x, y) -> (a*x + b*y + tx, c*x + d*y + ty)``."""

    a: float = 1.0
    b: float = 0.0
    tx: float = 0.0
    c: float = 0.0
    d: float = 1.0
    ty: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b, self.tx], [self.c, self.d, self.ty], [0.0, 0.0, 1.0]])

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    @classmethod
    def from_matrix(cls, m) -> "AffineTransform":
        m = np.asarray(m, dtype=float)
        return cls(m[0, 0], m[0, 1], m[0, 2], m[1, 0], m[1, 1], m[1, 2])

    @classmethod
    def rigid(cls, angle_deg: float, tx: float = 0.0, ty: float = 0.0, center=(0.0, 0.0)) -> "AffineTransform":
        """Rotate by ``angle_deg`` about ``center`` then translate by (tx, ty).

        Positive angles turn +x toward +y (clockwise on screen, y pointing down).
        """
        th = math.radians(angle_deg)
        cos, sin = math.cos(th), math.sin(th)
        cx, cy = center
        return cls(
            cos, -sin, cx - cos * cx + sin * cy + tx,
            sin, cos, cy - sin * cx - cos * cy + ty,
        )

    @property
    def angle_deg(self) -> float:
        return math.degrees(math.atan2(self.c, self.a))

    def inverse(self) -> "AffineTransform":
        if abs(self.det) < DET_EPS:
            raise SingularTransform(f"determinant {self.det:g} is (near) zero")
        return AffineTransform.from_matrix(np.linalg.inv(self.matrix))

    def compose(self, first: "AffineTransform") -> "AffineTransform":
        """Transform equal to applying ``first`` and then ``self``."""
        return AffineTransform.from_matrix(self.matrix @ first.matrix)

    def to_json(self) -> str:
        return json.dumps({"affine": [self.a, self.b, self.tx, self.c, self.d, self.ty]}) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AffineTransform":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", row=exc.lineno) from None
        vals = doc.get("affine") if isinstance(doc, dict) else None
        if not isinstance(vals, list) or len(vals) != 6:
            raise ParseError("expected a list of six numbers", field="affine")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in vals):
            raise ParseError("non-numeric or non-finite entry", field="affine")
        return cls(*(float(v) for v in vals))


def load_transform(path) -> AffineTransform:
    try:
        return AffineTransform.from_json(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------- #
# warping
# --------------------------------------------------------------------------- #


def _bilinear(src: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill) -> np.ndarray:
    """Sample ``src`` (H, W[, C]) at float coords. Outside [0, W-1]x[0, H-1] -> fill."""
    h, w = src.shape[:2]
    # rounding in cos/sin puts exact edge samples a hair outside; keep them
    valid = (xs >= -EDGE_EPS) & (xs <= w - 1 + EDGE_EPS) & (ys >= -EDGE_EPS) & (ys <= h - 1 + EDGE_EPS)
    xs = np.where(valid, np.clip(xs, 0, w - 1), 0.0)
    ys = np.where(valid, np.clip(ys, 0, h - 1), 0.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    if src.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
        valid_b = valid[..., None]
    else:
        valid_b = valid
    s = src.astype(np.float64, copy=False)
    top = s[y0, x0] * (1 - fx) + s[y0, x1] * fx
    bottom = s[y1, x0] * (1 - fx) + s[y1, x1] * fx
    out = top * (1 - fy) + bottom * fy
    return np.where(valid_b, out, fill)


def _warp_region(src: np.ndarray, inv: AffineTransform, x0: int, y0: int, x1: int, y1: int, fill):
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    sx = inv.a * xs + inv.b * ys + inv.tx
    sy = inv.c * xs + inv.d * ys + inv.ty
    return _bilinear(src, sx, sy, fill)


def warp_array(src: np.ndarray, transform: AffineTransform, out_dims, fill=WHITE) -> np.ndarray:
    """Float warp of a 2-D or 3-D array, no rounding."""
    inv = transform.inverse()
    w, h = out_dims
    return _warp_region(src, inv, 0, 0, w, h, fill)


def apply(
    image: RasterImage,
    transform: AffineTransform,
    out_dims: tuple[int, int],
    grid: TileGrid | None = None,
    workers: int = 1,
) -> RasterImage:
    """Resample ``image`` into an ``out_dims = (width, height)`` frame.

    With ``grid`` the output is computed tile by tile; the result is
    bit-identical to the single-pass warp.
    """
    inv = transform.inverse()
    width, height = out_dims
    src = image.pixels

    def region(_view, rect):
        x0, y0, x1, y1 = rect.padded
        vals = _warp_region(src, inv, x0, y0, x1, y1, float(WHITE))
        return np.clip(np.rint(vals), 0, 255).astype(np.uint8)

    canvas = np.empty((height, width), dtype=np.uint8)
    grid = grid or TileGrid(max(width, height), 0)
    return RasterImage(map_tiles(region, canvas, TileGrid(grid.tile_size, 0), workers))


# --------------------------------------------------------------------------- #
# rigid estimation
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class RigidConfig:
    max_side: int = 1024
    angle_min: float = -10.0
    angle_max: float = 10.0
    angle_step: float = 0.5

    def angles(self) -> np.ndarray:
        n = int(round((self.angle_max - self.angle_min) / self.angle_step))
        return self.angle_min + self.angle_step * np.arange(n + 1)


def _to_signal(image: RasterImage, factor: int) -> np.ndarray:
    """Inverted luminance (tissue bright, white background 0), block-averaged by ``factor``."""
    gray = image.pixels.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    sig = 255.0 - gray
    if factor > 1:
        h = max(sig.shape[0] // factor, 1) * factor
        w = max(sig.shape[1] // factor, 1) * factor
        sig = _pad_to(sig, (max(h, sig.shape[0]), max(w, sig.shape[1])))[:h, :w]
        sig = sig.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    return sig


def _phase_correlation(ref: np.ndarray, mov: np.ndarray) -> tuple[int, int]:
    """Integer (dy, dx) such that ``mov`` shifted by it best matches ``ref``."""
    f = np.fft.fft2(ref) * np.conj(np.fft.fft2(mov))
    mag = np.abs(f)
    f = np.where(mag > 0, f / np.where(mag > 0, mag, 1.0), 0.0)
    corr = np.fft.ifft2(f).real
    peak = np.unravel_index(int(np.argmax(corr)), corr.shape)
    return tuple(int(p - n) if p > n // 2 else int(p) for p, n in zip(peak, corr.shape))


def _ncc(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    if mask.sum() < 16:
        return -np.inf
    x, y = a[mask], b[mask]
    x = x - x.mean()
    y = y - y.mean()
    den = math.sqrt(float(np.dot(x, x)) * float(np.dot(y, y)))
    return float(np.dot(x, y)) / den if den > 0 else -np.inf


def _pad_to(a: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape)
    out[: a.shape[0], : a.shape[1]] = a
    return out


def estimate_rigid(source: RasterImage, target: RasterImage, config: RigidConfig = RigidConfig()) -> AffineTransform:
    """Rotation + translation mapping ``source`` onto ``target``.

    Both images are reduced to inverted grayscale at most ``max_side`` pixels
    on a side. For each angle on the grid the rotated source is translated by
    phase correlation and scored by normalized cross-correlation over the
    overlap; the best pair wins.
    """
    factor = max(1, math.ceil(max(source.dims + target.dims) / config.max_side))
    src = _to_signal(source, factor)
    tgt = _to_signal(target, factor)
    if np.ptp(src) == 0 or np.ptp(tgt) == 0:
        raise DegenerateInput("constant image cannot be registered")

    shape = (max(src.shape[0], tgt.shape[0]), max(src.shape[1], tgt.shape[1]))
    tgt_p = _pad_to(tgt, shape)
    tgt_mask = _pad_to(np.ones_like(tgt), shape) > 0
    center = ((src.shape[1] - 1) / 2.0, (src.shape[0] - 1) / 2.0)
    src_ones = np.ones_like(src)

    best = (-np.inf, 0.0, 0, 0)
    for angle in config.angles():
        rot = AffineTransform.rigid(float(angle), center=center)
        moved = warp_array(src, rot, (shape[1], shape[0]), fill=0.0)
        support = warp_array(src_ones, rot, (shape[1], shape[0]), fill=0.0) > 0.5
        dy, dx = _phase_correlation(tgt_p, moved)
        shifted = np.roll(moved, (dy, dx), axis=(0, 1))
        sup = np.roll(support, (dy, dx), axis=(0, 1))
        # discard wrapped-around content
        if dy > 0:
            sup[:dy] = False
        elif dy < 0:
            sup[dy:] = False
        if dx > 0:
            sup[:, :dx] = False
        elif dx < 0:
            sup[:, dx:] = False
        score = _ncc(shifted, tgt_p, sup & tgt_mask)
        if score > best[0]:
            best = (score, float(angle), dx, dy)

    _, angle, dx, dy = best
    # downsampled pixel u covers full-resolution x in [f*u, f*u + f)
    full_center = tuple(factor * c + (factor - 1) / 2.0 for c in center)
    return AffineTransform.rigid(angle, dx * factor, dy * factor, center=full_center)
