"""Labeled RGB training samples, the published class ranges and a nearest-midpoint oracle."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParseError

N_CLASSES = 6
CLASS_NAMES = ("Background", "Blue", "Gray", "Light Brown", "Medium Brown", "Dark Brown")
CSV_HEADER = ("r", "g", "b", "class")


class ClassSample(NamedTuple):
    r: int
    g: int
    b: int
    class_id: int

    @property
    def rgb(self) -> tuple[int, int, int]:
        return self.r, self.g, self.b


def _check_sample(s: ClassSample) -> None:
    for name, v in zip(("r", "g", "b"), s.rgb):
        if not 0 <= v <= 255:
            raise ValueError(f"{name}={v} outside 0-255")
    if not 0 <= s.class_id < N_CLASSES:
        raise ValueError(f"class={s.class_id} outside 0-{N_CLASSES - 1}")


@dataclass(frozen=True)
class ClassRangeTable:
    """Per-class inclusive channel ranges ``(r_lo, r_hi, g_lo, g_hi, b_lo, b_hi)``."""

    ranges: tuple[tuple[int, int, int, int, int, int], ...]

    def __post_init__(self):
        if len(self.ranges) != N_CLASSES:
            raise ValueError(f"expected {N_CLASSES} classes, got {len(self.ranges)}")
        for k, row in enumerate(self.ranges):
            if len(row) != 6:
                raise ValueError(f"class {k}: expected 6 bounds")
            for lo, hi in zip(row[0::2], row[1::2]):
                if lo > hi:
                    raise ValueError(f"class {k}: lo {lo} > hi {hi}")

    def __getitem__(self, class_id: int):
        return self.ranges[class_id]

    def __len__(self):
        return len(self.ranges)

    def lows(self) -> np.ndarray:
        return np.array([row[0::2] for row in self.ranges], dtype=np.int64)

    def highs(self) -> np.ndarray:
        return np.array([row[1::2] for row in self.ranges], dtype=np.int64)

    def midpoints(self) -> np.ndarray:
        """(6, 3) float array of box centers in channel units."""
        return (self.lows() + self.highs()) / 2.0

    def contains(self, sample: ClassSample) -> bool:
        lo, hi = self.lows()[sample.class_id], self.highs()[sample.class_id]
        rgb = np.array(sample.rgb)
        return bool(np.all(lo <= rgb) and np.all(rgb <= hi))


_BUILTIN = ClassRangeTable((
    (214, 247, 214, 247, 213, 247),  # 0 background
    (24, 208, 44, 217, 79, 228),     # 1 blue
    (63, 221, 65, 221, 77, 226),     # 2 gray
    (163, 251, 124, 218, 107, 214),  # 3 light brown
    (136, 192, 87, 157, 70, 147),    # 4 medium brown
    (37, 98, 0, 67, 0, 61),          # 5 dark brown
))


def builtin_table() -> ClassRangeTable:
    """Expert-picked training ranges for the six tissue classes."""
    return _BUILTIN


def synth_samples(table: ClassRangeTable, per_class: int, seed: int) -> list[ClassSample]:
    """Draw ``per_class`` labeled points per class, class-major order.

    Each channel is a normal centered on the range midpoint with
    sigma = (hi - lo) / 4, truncated to [lo, hi] by rejection and rounded.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for k in range(len(table)):
        row = table[k]
        channels = []
        for lo, hi in zip(row[0::2], row[1::2]):
            channels.append(_truncated_normal(rng, lo, hi, per_class))
        for r, g, b in zip(*channels):
            out.append(ClassSample(int(r), int(g), int(b), k))
    return out


def _truncated_normal(rng: np.random.Generator, lo: int, hi: int, n: int) -> np.ndarray:
    if lo == hi:
        return np.full(n, lo, dtype=np.int64)
    mid, sigma = (lo + hi) / 2.0, (hi - lo) / 4.0
    vals = np.empty(0)
    while vals.size < n:
        draw = rng.normal(mid, sigma, size=2 * n)
        vals = np.concatenate([vals, draw[(draw >= lo) & (draw <= hi)]])
    return np.clip(np.rint(vals[:n]), lo, hi).astype(np.int64)


def split_per_class(samples: Sequence[ClassSample], n_train: int):
    """First ``n_train`` samples of each class go to train, the rest to test."""
    seen: dict[int, int] = {}
    train, test = [], []
    for s in samples:
        seen[s.class_id] = seen.get(s.class_id, 0) + 1
        (train if seen[s.class_id] <= n_train else test).append(s)
    return train, test


def oracle_classify(table: ClassRangeTable, pixel) -> int:
    """Nearest class-box midpoint in 255-normalized RGB; ties go to the lower class."""
    best, best_d = 0, None
    px = [c / 255.0 for c in pixel]
    for k, mid in enumerate(table.midpoints()):
        d = sum((p - m / 255.0) ** 2 for p, m in zip(px, mid))
        if best_d is None or d < best_d:
            best, best_d = k, d
    return best


# --------------------------------------------------------------------------- #
# CSV
# --------------------------------------------------------------------------- #


def load_samples(csv_text: str) -> list[ClassSample]:
    """Parse ``r,g,b,class`` CSV text. Data rows are numbered from 1."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty document", row=0) from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise ParseError(f"header must be {','.join(CSV_HEADER)}, got {','.join(header)}", row=0)
    out = []
    for i, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 columns, got {len(row)}", row=i)
        try:
            sample = ClassSample(*(int(c) for c in row))
        except ValueError:
            raise ParseError(f"non-integer value in {row!r}", row=i) from None
        try:
            _check_sample(sample)
        except ValueError as exc:
            raise ParseError(str(exc), row=i) from None
        out.append(sample)
    return out


def save_samples(samples: Sequence[ClassSample]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in samples:
        writer.writerow(tuple(s))
    return buf.getvalue()


def as_arrays(samples: Sequence[ClassSample]) -> tuple[np.ndarray, np.ndarray]:
    """Return (N, 3) float RGB and (N,) int class ids."""
    arr = np.array([tuple(s) for s in samples], dtype=np.int64).reshape(-1, 4)
    return arr[:, :3].astype(np.float64), arr[:, 3]
