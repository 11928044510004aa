import json
import subprocess
import sys

import numpy as np
import pytest

from cbi.anfis import load_model, serialize_model
from cbi.cli import main
from cbi.raster import GrayImage, RasterImage, decode, decode_gray, decode_mask, encode
from helpers import shifted, textured_image


def test_train_synthetic_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["train", "--synthetic", "--epochs", "20", "-o", str(a)]) == 0
    assert main(["train", "--synthetic", "--epochs", "20", "-o", str(b)]) == 0
    assert a.read_text() == b.read_text()
    report = (tmp_path / "a.rmse.csv").read_text().splitlines()
    assert report[0] == "epoch,rmse"
    assert 1 <= len(report) - 1 <= 20
    assert "held-out" in capsys.readouterr().out


def test_train_default_matches_shipped_model(tmp_path, demo_model):
    out = tmp_path / "m.json"
    assert main(["train", "--synthetic", "-o", str(out)]) == 0
    assert load_model(out.read_text()) == demo_model


def test_train_from_csv(tmp_path):
    rows = ["r,g,b,class"] + [f"{v},{v},{v},{k}" for k in range(6) for v in (250 - 40 * k, 245 - 40 * k)]
    (tmp_path / "s.csv").write_text("\n".join(rows) + "\n")
    out = tmp_path / "m.json"
    assert main(["train", str(tmp_path / "s.csv"), "--epochs", "5", "-o", str(out), "--report", str(tmp_path / "r.csv")]) == 0
    load_model(out.read_text())
    assert (tmp_path / "r.csv").exists()


def test_train_missing_class(tmp_path, capsys):
    (tmp_path / "s.csv").write_text("r,g,b,class\n1,2,3,0\n4,5,6,1\n")
    assert main(["train", str(tmp_path / "s.csv"), "-o", str(tmp_path / "m.json")]) == 3
    assert "MissingClass" in capsys.readouterr().err
    assert not (tmp_path / "m.json").exists()


def test_train_bad_csv_row(tmp_path, capsys):
    (tmp_path / "s.csv").write_text("r,g,b,class\n1,2,3,0\n4,x,6,1\n")
    assert main(["train", str(tmp_path / "s.csv"), "-o", str(tmp_path / "m.json")]) == 3
    assert "row 2" in capsys.readouterr().err


def test_train_zero_epochs(tmp_path):
    out = tmp_path / "m.json"
    assert main(["train", "--synthetic", "--epochs", "0", "-o", str(out)]) == 0
    assert len((tmp_path / "m.rmse.csv").read_text().splitlines()) == 2


def test_train_needs_one_source(tmp_path):
    assert main(["train", "-o", str(tmp_path / "m.json")]) == 2


def test_register(tmp_path, capsys):
    img = textured_image(np.random.default_rng(0), size=128, margin=24)
    encode(img, tmp_path / "src.png")
    encode(shifted(img, 5, -4), tmp_path / "dst.png")
    assert main(["register", str(tmp_path / "src.png"), str(tmp_path / "dst.png"), "-o", str(tmp_path / "t.json")]) == 0
    a, b, tx, c, d, ty = json.loads((tmp_path / "t.json").read_text())["affine"]
    assert abs(tx - 5) <= 1 and abs(ty + 4) <= 1
    assert "angle" in capsys.readouterr().out


def test_register_blank_is_degenerate(tmp_path):
    encode(RasterImage.blank(16, 16), tmp_path / "w.png")
    assert main(["register", str(tmp_path / "w.png"), str(tmp_path / "w.png"), "-o", str(tmp_path / "t.json")]) == 3


@pytest.fixture
def stage_inputs(tmp_path, demo_model):
    rgb = np.full((40, 40, 3), 235, np.uint8)
    rgb[5:25, 5:25] = (70, 30, 20)
    rgb[15:35, 15:35] = (150, 100, 60)
    encode(RasterImage(rgb), tmp_path / "img.png")
    (tmp_path / "m.json").write_text(serialize_model(demo_model))
    return tmp_path


def test_filter_composite_attention_chain(stage_inputs, capsys):
    d = stage_inputs
    assert main(["filter", str(d / "img.png"), "--model", str(d / "m.json"), "--classes", "5", "-o", str(d / "a.png")]) == 0
    assert main(["filter", str(d / "img.png"), "--model", str(d / "m.json"), "--classes", "4", "-o", str(d / "b.png"),
                 "--tile-size", "8", "--workers", "3"]) == 0
    a, b = decode_gray(d / "a.png"), decode_gray(d / "b.png")
    assert a.foreground[10, 10] and not a.foreground[30, 30]
    assert b.foreground[30, 30] and not b.foreground[2, 2]

    assert main(["composite", "--layer", str(d / "a.png"), "255,0,0", "0", "dark",
                 "--layer", str(d / "b.png"), "#0000ff", "1", "--legend", str(d / "legend.png"), "-o", str(d / "cbi.png")]) == 0
    cbi = decode(d / "cbi.png").pixels
    assert tuple(cbi[2, 2]) == (255, 255, 255)
    assert cbi[10, 10, 0] > cbi[10, 10, 2]
    assert cbi[30, 30, 2] > cbi[30, 30, 0]
    assert (d / "legend.png").exists()

    capsys.readouterr()
    assert main(["attention", str(d / "a.png"), str(d / "b.png"), "--window", "5", "--thresholds", "0.2",
                 "--close-radius", "0", "--min-area", "1", "--overlay", str(d / "img.png"), "-o", str(d / "mask.png")]) == 0
    mask = decode_mask(d / "mask.png")
    # the second square overwrites the first, so the stains only meet along its edge
    assert mask[15, 15] and mask[15, 22] and mask[22, 15]
    assert not mask[2, 2] and not mask[30, 30] and not mask[10, 10]
    assert (d / "attention_overlay.png").exists()
    report = json.loads(capsys.readouterr().out)
    assert report["attention"]["window"] == 5 and report["mask_pixels"] == int(mask.sum())


def test_filter_unsupported_format(stage_inputs):
    (stage_inputs / "x.jpg").write_bytes(b"\xff\xd8")
    assert main(["filter", str(stage_inputs / "x.jpg"), "--model", str(stage_inputs / "m.json"), "--classes", "5",
                 "-o", str(stage_inputs / "o.png")]) == 3


def test_attention_bad_window(stage_inputs):
    encode(GrayImage(np.full((4, 4), 255, np.uint8)), stage_inputs / "g.png")
    assert main(["attention", str(stage_inputs / "g.png"), "--window", "4", "-o", str(stage_inputs / "m.png")]) == 2


def test_workers_env_applies(stage_inputs, monkeypatch):
    monkeypatch.setenv("CBI_WORKERS", "2")
    d = stage_inputs
    assert main(["filter", str(d / "img.png"), "--model", str(d / "m.json"), "--classes", "5", "-o", str(d / "a.png")]) == 0
    monkeypatch.setenv("CBI_WORKERS", "-1")
    assert main(["filter", str(d / "img.png"), "--model", str(d / "m.json"), "--classes", "5", "-o", str(d / "a.png")]) == 2


def test_demo_and_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cbi.cli", "demo", str(tmp_path / "d"), "--size", "128"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert main(["run", str(tmp_path / "d" / "run.json")]) == 0
    assert (tmp_path / "d" / "out" / "cbi.png").exists()
