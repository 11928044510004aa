import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from cbi.errors import DimensionMismatch, IoError, UnsupportedFormat
from cbi.raster import (
    GrayImage,
    RasterImage,
    TileGrid,
    decode,
    decode_gray,
    decode_mask,
    encode,
    encode_mask,
    map_tiles,
    stitch,
    tile_rects,
    tiles,
)


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = RasterImage(rng.integers(0, 256, (37, 53, 3), dtype=np.uint8))
    encode(img, tmp_path / "a.png")
    assert decode(tmp_path / "a.png") == img


def test_tiff_round_trip(tmp_path):
    img = RasterImage(np.random.default_rng(1).integers(0, 256, (8, 9, 3), dtype=np.uint8))
    encode(img, tmp_path / "a.tif")
    assert decode(tmp_path / "a.tif") == img


def test_gray_round_trip(tmp_path):
    g = GrayImage(np.arange(64, dtype=np.uint8).reshape(8, 8) * 4)
    encode(g, tmp_path / "g.png")
    assert decode_gray(tmp_path / "g.png") == g


def test_two_by_two_white(tmp_path):
    Image.new("RGB", (2, 2), (255, 255, 255)).save(tmp_path / "w.png")
    img = decode(tmp_path / "w.png")
    assert img.dims == (2, 2)
    assert np.all(img.pixels == 255)


def test_sixteen_bit_tiff_rejected(tmp_path):
    Image.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(tmp_path / "deep.tif")
    with pytest.raises(UnsupportedFormat):
        decode(tmp_path / "deep.tif")


def test_unknown_extension_rejected(tmp_path):
    (tmp_path / "x.bmp").write_bytes(b"BM")
    with pytest.raises(UnsupportedFormat):
        decode(tmp_path / "x.bmp")


def test_missing_file(tmp_path):
    with pytest.raises(IoError):
        decode(tmp_path / "nope.png")


def test_mask_round_trip(tmp_path):
    mask = np.random.default_rng(2).random((13, 17)) > 0.5
    encode_mask(mask, tmp_path / "m.png")
    assert np.array_equal(decode_mask(tmp_path / "m.png"), mask)
    assert Image.open(tmp_path / "m.png").mode == "1"


def test_single_tile_when_image_fits():
    assert len(tile_rects(512, 512, TileGrid(512))) == 1


def test_one_extra_column_makes_second_tile():
    rects = tile_rects(513, 512, TileGrid(512))
    assert [r.core[2] - r.core[0] for r in rects] == [512, 1]


@given(st.integers(1, 70), st.integers(1, 70), st.integers(1, 32), st.integers(0, 31))
def test_cores_partition_image(w, h, size, overlap):
    overlap = min(overlap, size - 1)
    count = np.zeros((h, w), dtype=int)
    for r in tile_rects(w, h, TileGrid(size, overlap)):
        x0, y0, x1, y1 = r.core
        count[y0:y1, x0:x1] += 1
        px0, py0, px1, py1 = r.padded
        assert px0 <= x0 and py0 <= y0 and px1 >= x1 and py1 >= y1
        assert px0 >= 0 and py0 >= 0 and px1 <= w and py1 <= h
    assert np.all(count == 1)


def test_stitch_ignores_arrival_order():
    arr = np.random.default_rng(3).integers(0, 256, (41, 29), dtype=np.uint8)
    pairs = [(r, v.copy()) for r, v in tiles(arr, TileGrid(8, 3))]
    random.Random(0).shuffle(pairs)
    assert np.array_equal(stitch(pairs, (29, 41)), arr)


def test_stitch_rejects_wrong_shape():
    arr = np.zeros((10, 10))
    pairs = [(r, v[:-1]) for r, v in tiles(arr, TileGrid(5))]
    with pytest.raises(DimensionMismatch):
        stitch(pairs, (10, 10))


def test_stitch_rejects_gaps():
    arr = np.zeros((10, 10))
    pairs = list(tiles(arr, TileGrid(5)))[:-1]
    with pytest.raises(DimensionMismatch):
        stitch(pairs, (10, 10))


@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 16), st.integers(1, 4))
def test_pointwise_op_tiled_equals_whole(w, h, size, workers):
    arr = np.random.default_rng(w * 100 + h).integers(0, 256, (h, w, 3), dtype=np.uint8)

    def op(view, _rect):
        return (view.sum(axis=-1) > 300).astype(np.uint8)

    whole = op(arr, None)
    assert np.array_equal(map_tiles(op, arr, TileGrid(size), workers), whole)


def test_image_shapes_validated():
    with pytest.raises(ValueError):
        RasterImage(np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(ValueError):
        GrayImage(np.zeros((2, 2, 3), dtype=np.uint8))
