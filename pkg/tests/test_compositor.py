import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbi.compositor import Layer, composite, legend, legend_swatch_rows
from cbi.errors import DimensionMismatch, DuplicateOrderIndex
from cbi.raster import GrayImage, TileGrid

RED, BLUE = (220, 30, 30), (30, 90, 230)


def gray(values, shape=(4, 4)):
    return GrayImage(np.asarray(values, dtype=np.uint8).reshape(shape))


def test_empty_is_white():
    out = composite([], dims=(4, 4))
    assert out.dims == (4, 4) and np.all(out.pixels == 255)


def test_empty_without_dims():
    with pytest.raises(DimensionMismatch):
        composite([])


def test_black_gray_gives_solid_color():
    out = composite([Layer(gray(np.zeros(16)), (255, 0, 0), 0)])
    assert np.all(out.pixels == (255, 0, 0))


def test_white_gray_leaves_canvas():
    out = composite([Layer(gray(np.full(16, 255)), (255, 0, 0), 0)])
    assert np.all(out.pixels == 255)


def test_partial_strength():
    out = composite([Layer(gray(np.full(16, 153)), (0, 0, 255), 0)])
    s = (255 - 153) / 255
    assert np.all(out.pixels == np.rint([(1 - s) * 255, (1 - s) * 255, (1 - s) * 255 + s * 255]))


def test_higher_order_on_top():
    a = Layer(gray(np.zeros(16)), RED, 0, "cd30")
    b = Layer(gray(np.zeros(16)), BLUE, 1, "pax5")
    for layers in ([a, b], [b, a]):
        assert np.all(composite(layers).pixels == BLUE)


def test_blend_mixes_with_below():
    a = Layer(gray(np.zeros(16)), RED, 0)
    b = Layer(gray(np.full(16, 128)), BLUE, 1)
    s = 127 / 255
    expected = np.rint((1 - s) * np.array(RED) + s * np.array(BLUE))
    assert np.all(composite([a, b], mode="blend").pixels == expected)
    # replace mode ignores what is below
    assert np.all(composite([a, b], mode="replace").pixels == np.rint((1 - s) * 255 + s * np.array(BLUE)))


@given(st.integers(0, 2**32 - 1))
def test_disjoint_layers_commute(seed):
    rng = np.random.default_rng(seed)
    owner = rng.integers(0, 4, (6, 7))  # 0 = nobody
    layers = []
    for k in (1, 2, 3):
        px = np.where(owner == k, rng.integers(0, 255, owner.shape), 255)
        layers.append(Layer(GrayImage(px.astype(np.uint8)), tuple(rng.integers(0, 256, 3)), int(rng.integers(0, 100)) * 3 + k))
    ref = composite(layers)
    for perm in itertools.permutations(layers):
        assert composite(list(perm)) == ref
    # disjoint layers ignore z-order entirely
    reordered = [Layer(l.gray, l.color, 10 - i) for i, l in enumerate(layers)]
    assert composite(reordered) == ref


def test_tiled_matches_whole():
    rng = np.random.default_rng(0)
    layers = [Layer(GrayImage(rng.integers(0, 256, (33, 21), dtype=np.uint8)), c, i) for i, c in enumerate((RED, BLUE))]
    whole = composite(layers, "blend")
    assert composite(layers, "blend", grid=TileGrid(8), workers=3) == whole


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        composite([Layer(gray(np.zeros(16)), RED, 0), Layer(gray(np.zeros(6), (2, 3)), BLUE, 1)])


def test_duplicate_order():
    with pytest.raises(DuplicateOrderIndex):
        composite([Layer(gray(np.zeros(16)), RED, 0), Layer(gray(np.zeros(16)), BLUE, 0)])


def test_unknown_mode():
    with pytest.raises(ValueError):
        composite([Layer(gray(np.zeros(16)), RED, 0)], mode="multiply")


@pytest.mark.parametrize("n", [1, 2])
def test_legend_swatches(n):
    layers = [Layer(gray(np.zeros(16)), BLUE, 5, "pax5"), Layer(gray(np.zeros(16)), RED, 1, "cd30")][:n]
    img = legend(layers).pixels
    rows = legend_swatch_rows(layers)
    assert len(rows) == n
    assert [c for _, c in rows] == [tuple(l.color) for l in sorted(layers, key=lambda l: l.order_index)]
    for y, color in rows:
        assert tuple(img[y + 12, 6 + 12]) == color
    # labels render as dark pixels to the right of the swatches
    assert (img[:, 40:] < 128).any()
