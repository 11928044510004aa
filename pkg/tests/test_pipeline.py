import json
import os
import shutil

import numpy as np
import pytest
from PIL import Image

from cbi.alignment import AffineTransform
from cbi.cli import main
from cbi.demo import write_demo
from cbi.errors import ConfigError, DimensionMismatch, DuplicateOrderIndex
from cbi.pipeline import changed_inputs, default_workers, load_run_config, run
from cbi.raster import RasterImage, decode, encode

EXPECTED = {"CD30_filtered.png", "PAX5_filtered.png", "cbi.png", "attention_mask.png", "manifest.json"}
SIZE = 256


@pytest.fixture(scope="module")
def demo_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("demo")
    write_demo(d, size=SIZE, seed=1, attention={"window": 15, "min_region_area": 50})
    return d


@pytest.fixture
def fresh(demo_dir, tmp_path):
    d = tmp_path / "demo"
    shutil.copytree(demo_dir, d)
    return d


def read_outputs(out_dir):
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir()) if p.name != "manifest.json"}


def test_demo_run_writes_expected_files(fresh):
    manifest = run(load_run_config(fresh / "run.json"))
    assert {p.name for p in (fresh / "out").iterdir()} == EXPECTED
    assert set(manifest["models"]) == {"CD30", "PAX5"}
    assert decode(fresh / "out" / "cbi.png").dims == (SIZE, SIZE)
    on_disk = json.loads((fresh / "out" / "manifest.json").read_text())
    assert on_disk["outputs"] == manifest["outputs"]
    assert set(on_disk["stage_seconds"]) >= {"load", "align", "filter", "morph", "composite", "attention", "write"}


def test_rerun_is_bit_identical(fresh):
    cfg = load_run_config(fresh / "run.json")
    run(cfg)
    first = read_outputs(fresh / "out")
    run(cfg)
    assert read_outputs(fresh / "out") == first


def test_workers_and_tiles_do_not_change_outputs(fresh):
    results = []
    for workers, tile in ((1, 256), (4, 64), (3, 100)):
        cfg = load_run_config(fresh / "run.json", workers=workers, tile_size=tile)
        run(cfg)
        results.append(read_outputs(fresh / "out"))
    assert results[0] == results[1] == results[2]


def test_optional_outputs(fresh):
    cfg = load_run_config(fresh / "run.json")
    cfg.legend = True
    cfg.overlay_style = "tint"
    run(cfg)
    names = {p.name for p in (fresh / "out").iterdir()}
    assert names == EXPECTED | {"legend.png", "attention_overlay.png"}


def test_dimension_mismatch_names_both_images_and_cleans_up(fresh):
    small = decode(fresh / "pax5.png").pixels[:200, :180]
    encode(RasterImage(np.ascontiguousarray(small)), fresh / "pax5.png")
    with pytest.raises(DimensionMismatch) as err:
        run(load_run_config(fresh / "run.json"))
    msg = str(err.value)
    assert "pax5.png" in msg and "he.png" in msg
    # CD30 was filtered and written before PAX5 failed; nothing may remain
    assert not (fresh / "out").exists() or not any((fresh / "out").iterdir())


def test_cli_exit_code_for_mismatch(fresh, capsys):
    Image.new("RGB", (10, 10), "white").save(fresh / "pax5.png")
    assert main(["run", str(fresh / "run.json")]) == 3
    assert "DimensionMismatch" in capsys.readouterr().err


def test_transform_sidecar_aligns_moved_image(fresh):
    run(load_run_config(fresh / "run.json"))
    base = (fresh / "out" / "PAX5_filtered.png").read_bytes()
    moved_dims = (SIZE + 20, SIZE + 10)
    pax = decode(fresh / "pax5.png").pixels
    canvas = np.full((moved_dims[1], moved_dims[0], 3), 255, np.uint8)
    canvas[10:, 20:] = pax
    encode(RasterImage(canvas), fresh / "pax5.png")
    (fresh / "pax5_t.json").write_text(AffineTransform(tx=-20, ty=-10).to_json())
    prof = json.loads((fresh / "pax5.json").read_text())
    prof["transform_path"] = "pax5_t.json"
    (fresh / "pax5.json").write_text(json.dumps(prof))
    moved = run(load_run_config(fresh / "run.json"))
    assert (fresh / "out" / "PAX5_filtered.png").read_bytes() == base
    assert moved["profiles"]["PAX5"]["transform"]["tx"] == -20


def test_register_flag_recovers_shift(fresh):
    # the unshifted PAX5 slide serves as the reference frame
    pax = decode(fresh / "pax5.png").pixels
    shutil.copy(fresh / "pax5.png", fresh / "he.png")
    canvas = np.full_like(pax, 255)
    canvas[:, 6:] = pax[:, :-6]
    encode(RasterImage(canvas), fresh / "pax5.png")
    manifest = run(load_run_config(fresh / "run.json"), register=True)
    t = manifest["profiles"]["PAX5"]["transform"]
    assert abs(t["tx"] + 6) <= 1 and abs(t["ty"]) <= 1
    assert manifest["profiles"]["CD30"]["transform"] is not None


def test_verify_against_detects_changes(fresh, capsys):
    assert main(["run", str(fresh / "run.json")]) == 0
    manifest = fresh / "out" / "manifest.json"
    kept = fresh / "kept_manifest.json"
    shutil.copy(manifest, kept)
    assert changed_inputs(kept) == []
    assert main(["run", str(fresh / "run.json"), "--verify-against", str(kept)]) == 0
    model = json.loads((fresh / "model.json").read_text())
    model["rules"][0]["consequent"][3] += 0.01
    (fresh / "model.json").write_text(json.dumps(model))
    assert main(["run", str(fresh / "run.json"), "--verify-against", str(kept)]) == 3
    assert "model.json" in capsys.readouterr().err


def test_duplicate_order_index(fresh):
    prof = json.loads((fresh / "pax5.json").read_text())
    prof["order_index"] = 0
    (fresh / "pax5.json").write_text(json.dumps(prof))
    with pytest.raises(DuplicateOrderIndex):
        run(load_run_config(fresh / "run.json"))


def test_bad_config(tmp_path):
    (tmp_path / "run.json").write_text('{"profiles": []}')
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "run.json")


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("CBI_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("CBI_WORKERS", "zero")
    with pytest.raises(ConfigError):
        default_workers()
    monkeypatch.delenv("CBI_WORKERS")
    assert default_workers() == 1
