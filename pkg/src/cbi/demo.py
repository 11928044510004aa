"""Demo bundle: shipped model + synthetic slides + profiles + run config."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .anfis import AnfisModel, TrainConfig, load_model, train
from .raster import encode
from .samples import builtin_table, split_per_class, synth_samples
from .synthetic import make_demo

DEMO_SEED = 7
DEMO_PER_CLASS = 30
DEMO_TRAIN_PER_CLASS = 25

CD30_PROFILE = {"name": "CD30", "selected_classes": [3, 4, 5], "overlay_color": [220, 30, 30], "order_index": 0}
PAX5_PROFILE = {"name": "PAX5", "selected_classes": [4], "overlay_color": [30, 90, 230], "order_index": 1}


def demo_samples():
    """The 180-point synthetic set (30 per class) and its 25/5 train/test split."""
    samples = synth_samples(builtin_table(), DEMO_PER_CLASS, DEMO_SEED)
    train_set, test_set = split_per_class(samples, DEMO_TRAIN_PER_CLASS)
    return samples, train_set, test_set


def train_demo_model() -> AnfisModel:
    _, train_set, _ = demo_samples()
    return train(train_set, TrainConfig(seed=DEMO_SEED)).model


def demo_model() -> AnfisModel:
    """The shipped shared model (see ``scripts/build_demo_data.py``)."""
    text = resources.files("cbi.data").joinpath("demo_model.json").read_text()
    return load_model(text)


def write_demo(directory: Path, size: int = 2048, seed: int = 0, **run_options) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    slides = make_demo(size, seed)
    paths = {
        "he": directory / "he.png",
        "cd30": directory / "cd30.png",
        "pax5": directory / "pax5.png",
        "model": directory / "model.json",
        "cd30_profile": directory / "cd30.json",
        "pax5_profile": directory / "pax5.json",
        "config": directory / "run.json",
    }
    encode(slides.he, paths["he"])
    encode(slides.cd30, paths["cd30"])
    encode(slides.pax5, paths["pax5"])
    paths["model"].write_text(resources.files("cbi.data").joinpath("demo_model.json").read_text())
    for key, profile, image in (("cd30_profile", CD30_PROFILE, "cd30.png"), ("pax5_profile", PAX5_PROFILE, "pax5.png")):
        doc = dict(profile, model_path="model.json", image_path=image)
        paths[key].write_text(json.dumps(doc, indent=2) + "\n")
    config = {"reference_image": "he.png", "profiles": ["cd30.json", "pax5.json"], "output_dir": "out"}
    config.update(run_options)
    paths["config"].write_text(json.dumps(config, indent=2) + "\n")
    return paths
