"""End-to-end run: align -> filter -> clean per biomarker, then composite and attention."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import AffineTransform, apply, estimate_rigid
from .attention import AttentionConfig, co_localize, density_map, overlay_mask
from .compositor import Layer, composite, legend
from .errors import CbiError, ConfigError, DimensionMismatch, DuplicateOrderIndex, IoError
from .filtering import BiomarkerProfile, MorphConfig, filter_image, load_profile, morph_clean
from .raster import TileGrid, decode, encode, encode_mask

log = logging.getLogger(__name__)

CBI_NAME = "cbi.png"
MASK_NAME = "attention_mask.png"
MANIFEST_NAME = "manifest.json"
LEGEND_NAME = "legend.png"
OVERLAY_NAME = "attention_overlay.png"


def default_workers() -> int:
    env = os.environ.get("CBI_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"CBI_WORKERS={env!r} is not an integer") from None
        if n < 1:
            raise ConfigError("CBI_WORKERS must be >= 1")
        return n
    return 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    return h.hexdigest()


@dataclass
class RunConfig:
    reference_image: Path
    profiles: list[Path]
    morph: MorphConfig = field(default_factory=MorphConfig)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    tile: TileGrid = field(default_factory=TileGrid)
    output_dir: Path = Path("out")
    workers: int = 1
    composite_mode: str = "replace"
    legend: bool = False
    overlay_style: str | None = None
    config_path: Path | None = None

    def __post_init__(self):
        if not self.profiles:
            raise ConfigError("at least one profile is required")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.composite_mode not in ("replace", "blend"):
            raise ConfigError("composite_mode must be 'replace' or 'blend'")
        if self.overlay_style not in (None, "contour", "tint"):
            raise ConfigError("overlay must be 'contour' or 'tint'")


def _sub(doc: dict, key: str, cls, path):
    section = doc.get(key, {})
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: {key!r} must be an object")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad {key!r} section: {exc}") from None


def load_run_config(path, workers: int | None = None, tile_size: int | None = None) -> RunConfig:
    """Parse a run config JSON; relative paths resolve against its folder."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    for key in ("reference_image", "profiles"):
        if key not in doc:
            raise ConfigError(f"{path}: missing field {key!r}")
    base = path.parent
    tile = _sub(doc, "tile", TileGrid, path)
    if tile_size is not None:
        tile = TileGrid(tile_size, min(tile.overlap, tile_size - 1))
    return RunConfig(
        reference_image=base / doc["reference_image"],
        profiles=[base / p for p in doc["profiles"]],
        morph=_sub(doc, "morph", MorphConfig, path),
        attention=_sub(doc, "attention", AttentionConfig, path),
        tile=tile,
        output_dir=base / doc.get("output_dir", "out"),
        workers=workers if workers is not None else int(doc.get("workers", default_workers())),
        composite_mode=doc.get("composite_mode", "replace"),
        legend=bool(doc.get("legend", False)),
        overlay_style=doc.get("overlay"),
        config_path=path,
    )


class _Stages:
    def __init__(self):
        self.seconds: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        except CbiError as exc:
            exc.args = (f"[{name}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - t0


def _inputs(config: RunConfig, profiles: list[BiomarkerProfile]) -> dict[str, str]:
    files = [config.reference_image, *config.profiles]
    if config.config_path is not None:
        files.append(config.config_path)
    for p in profiles:
        files.append(p.model_path)
        if p.image_path is not None:
            files.append(p.image_path)
    transforms = []
    for path in config.profiles:
        doc = json.loads(Path(path).read_text())
        if doc.get("transform_path"):
            transforms.append(Path(path).parent / doc["transform_path"])
    files.extend(transforms)
    return {str(Path(f).resolve()): sha256_file(f) for f in dict.fromkeys(files)}


def changed_inputs(manifest_path) -> list[str]:
    """Inputs whose current hash differs from the one recorded in a manifest."""
    doc = json.loads(Path(manifest_path).read_text())
    changed = []
    for name, digest in doc.get("inputs", {}).items():
        try:
            now = sha256_file(name)
        except IoError:
            now = None
        if now != digest:
            changed.append(name)
    return changed


def _align(profile: BiomarkerProfile, reference, config: RunConfig, register: bool):
    image = decode(profile.image_path)
    transform = profile.transform
    if transform is None and (register or profile.register):
        transform = estimate_rigid(image, reference)
        log.info("%s: estimated %s", profile.name, transform)
    if transform is None:
        if image.dims != reference.dims:
            raise DimensionMismatch(
                f"{profile.image_path} is {image.width}x{image.height} but reference "
                f"{config.reference_image} is {reference.width}x{reference.height}; "
                "supply a transform or --register"
            )
        return image, None
    return apply(image, transform, reference.dims, config.tile, config.workers), transform


def run(config: RunConfig, register: bool = False) -> dict:
    """Execute the pipeline and return the manifest (also written to disk).

    On failure every output written so far is removed before re-raising.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    stage = _Stages()

    def emit(path: Path, writer):
        writer(path)
        written.append(path)

    try:
        with stage("load"):
            profiles = [load_profile(p) for p in config.profiles]
            for p in profiles:
                if p.image_path is None:
                    raise ConfigError(f"profile {p.name}: missing image_path")
            orders = [p.order_index for p in profiles]
            if len(set(orders)) != len(orders):
                raise DuplicateOrderIndex(f"order_index values {orders} are not unique")
            names = [p.name for p in profiles]
            if len(set(names)) != len(names):
                raise ConfigError(f"profile names {names} are not unique")
            reference = decode(config.reference_image)
            inputs = _inputs(config, profiles)
        profiles.sort(key=lambda p: p.order_index)

        layers, grays, transforms = [], [], {}
        for profile in profiles:
            with stage("align"):
                image, transform = _align(profile, reference, config, register)
                transforms[profile.name] = None if transform is None else asdict(transform)
            with stage("filter"):
                gray = filter_image(image, profile.model, profile.selected_classes, config.tile, config.workers)
            with stage("morph"):
                gray = morph_clean(gray, config.morph, config.tile, config.workers)
            with stage("write"):
                emit(out_dir / f"{profile.name}_filtered.png", lambda p, g=gray: encode(g, p))
            grays.append(gray)
            layers.append(Layer(gray, profile.overlay_color, profile.order_index, profile.name))

        with stage("composite"):
            cbi = composite(layers, config.composite_mode, reference.dims, config.tile, config.workers)
        with stage("write"):
            emit(out_dir / CBI_NAME, lambda p: encode(cbi, p))
            if config.legend:
                emit(out_dir / LEGEND_NAME, lambda p: encode(legend(layers), p))

        with stage("attention"):
            densities = [density_map(g, config.attention.window, config.tile, config.workers) for g in grays]
            attention = co_localize(densities, config.attention)
        with stage("write"):
            emit(out_dir / MASK_NAME, lambda p: encode_mask(attention.mask, p))
            if config.overlay_style:
                over = overlay_mask(reference, attention.mask, config.overlay_style)
                emit(out_dir / OVERLAY_NAME, lambda p: encode(over, p))

        manifest = {
            "tool": "cbi",
            "version": __version__,
            "config_sha256": sha256_file(config.config_path) if config.config_path else None,
            "inputs": inputs,
            "models": {p.name: sha256_file(p.model_path) for p in profiles},
            "profiles": {
                p.name: {
                    "selected_classes": sorted(p.selected_classes),
                    "overlay_color": list(p.overlay_color),
                    "order_index": p.order_index,
                    "transform": transforms[p.name],
                }
                for p in profiles
            },
            "morph": asdict(config.morph),
            "attention": config.attention.to_dict(),
            "tile": asdict(config.tile),
            "workers": config.workers,
            "composite_mode": config.composite_mode,
            "attention_pixels": int(np.count_nonzero(attention.mask)),
            "outputs": {p.name: sha256_file(p) for p in written},
            "stage_seconds": {k: round(v, 4) for k, v in stage.seconds.items()},
        }
        emit(out_dir / MANIFEST_NAME, lambda p: p.write_text(json.dumps(manifest, indent=2) + "\n"))
        return manifest
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
