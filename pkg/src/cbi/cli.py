"""``cbi`` command line: train, register, run, and stage-wise filter/composite/attention."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import CbiError, ConfigError, IoError

log = logging.getLogger("cbi")


def _parse_classes(text: str) -> frozenset[int]:
    try:
        return frozenset(int(c) for c in text.split(",") if c.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad class list {text!r}") from None


def _parse_color(text: str) -> tuple[int, int, int]:
    t = text.strip()
    try:
        if t.startswith("#") and len(t) == 7:
            return tuple(int(t[i : i + 2], 16) for i in (1, 3, 5))
        vals = tuple(int(v) for v in t.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad color {text!r}") from None
    if len(vals) != 3 or not all(0 <= v <= 255 for v in vals):
        raise argparse.ArgumentTypeError(f"bad color {text!r}")
    return vals


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def _grid(args):
    from .raster import TileGrid

    return TileGrid(args.tile_size, 0)


def _workers(args) -> int:
    from .pipeline import default_workers

    return args.workers if args.workers is not None else default_workers()


# --------------------------------------------------------------------------- #
# commands
# --------------------------------------------------------------------------- #


def cmd_train(args) -> int:
    from .anfis import TrainConfig, classify, serialize_model, train
    from .samples import builtin_table, load_samples, oracle_classify, split_per_class, synth_samples

    if args.synthetic == (args.samples is not None):
        raise ConfigError("give exactly one of a samples CSV or --synthetic")
    if args.synthetic:
        samples = synth_samples(builtin_table(), args.per_class, args.seed)
        holdout = 5 if args.holdout is None else args.holdout
    else:
        samples = load_samples(_read_text(args.samples))
        holdout = args.holdout or 0
    if holdout:
        per_class = {}
        for s in samples:
            per_class[s.class_id] = per_class.get(s.class_id, 0) + 1
        train_set, test_set = split_per_class(samples, min(per_class.values()) - holdout)
    else:
        train_set, test_set = samples, []
    try:
        config = TrainConfig(args.epochs, args.learning_rate, args.ridge, args.seed, args.convergence_delta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    result = train(train_set, config)

    out = Path(args.output)
    out.write_text(serialize_model(result.model))
    report = Path(args.report) if args.report else out.with_suffix(".rmse.csv")
    lines = ["epoch,rmse"] + [f"{i},{r!r}" for i, r in enumerate(result.rmse_trace, start=1)]
    report.write_text("\n".join(lines) + "\n")
    print(f"initial RMSE {result.initial_rmse:.3f}, final RMSE {min(result.rmse_trace):.3f} "
          f"after {len(result.rmse_trace)} epoch(s); model -> {out}, report -> {report}")
    if test_set:
        table = builtin_table()
        hits = sum(classify(result.model, s.rgb) == s.class_id for s in test_set)
        agree = sum(classify(result.model, s.rgb) == oracle_classify(table, s.rgb) for s in test_set)
        print(f"held-out: {hits}/{len(test_set)} match labels, {agree}/{len(test_set)} match the range oracle")
    return 0


def cmd_register(args) -> int:
    from .alignment import RigidConfig, estimate_rigid
    from .raster import decode

    cfg = RigidConfig(args.max_side, args.angle_min, args.angle_max, args.angle_step)
    transform = estimate_rigid(decode(args.source), decode(args.target), cfg)
    Path(args.output).write_text(transform.to_json())
    print(f"angle {transform.angle_deg:.2f} deg, shift ({transform.tx:.1f}, {transform.ty:.1f}) -> {args.output}")
    return 0


def cmd_run(args) -> int:
    from .pipeline import changed_inputs, load_run_config, run

    if args.verify_against:
        changed = changed_inputs(args.verify_against)
        if changed:
            for name in changed:
                print(f"changed input: {name}", file=sys.stderr)
            return 3
        print("all inputs match the manifest")
    config = load_run_config(args.config, workers=args.workers, tile_size=args.tile_size)
    manifest = run(config, register=args.register)
    print(f"wrote {len(manifest['outputs']) + 1} files to {config.output_dir}")
    return 0


def cmd_filter(args) -> int:
    from .alignment import apply, load_transform
    from .anfis import load_model
    from .filtering import MorphConfig, filter_image, morph_clean
    from .raster import decode, encode

    image = decode(args.image)
    model = load_model(_read_text(args.model))
    grid, workers = _grid(args), _workers(args)
    if args.transform:
        dims = decode(args.reference).dims if args.reference else image.dims
        image = apply(image, load_transform(args.transform), dims, grid, workers)
    gray = filter_image(image, model, args.classes, grid, workers)
    if not args.no_clean:
        gray = morph_clean(gray, MorphConfig(args.open_radius, args.close_radius, args.min_area), grid, workers)
    encode(gray, args.output)
    return 0


def cmd_composite(args) -> int:
    from .compositor import Layer, composite, legend
    from .raster import decode_gray, encode

    layers = []
    for spec in args.layer:
        path, color, order = spec[:3]
        name = spec[3] if len(spec) > 3 else Path(path).stem
        layers.append(Layer(decode_gray(path), _parse_color(color), int(order), name))
    encode(composite(layers, args.mode, None, _grid(args), _workers(args)), args.output)
    if args.legend:
        encode(legend(layers), args.legend)
    return 0


def cmd_attention(args) -> int:
    from .attention import AttentionConfig, co_localize, density_map, overlay_mask
    from .raster import decode, decode_gray, encode, encode_mask

    grays = [decode_gray(p) for p in args.grays]
    try:
        config = AttentionConfig(args.window, args.thresholds, args.close_radius, args.min_area)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    grid, workers = _grid(args), _workers(args)
    mask = co_localize([density_map(g, config.window, grid, workers) for g in grays], config)
    encode_mask(mask.mask, args.output)
    if args.overlay:
        out = Path(args.overlay_output or Path(args.output).with_name("attention_overlay.png"))
        encode(overlay_mask(decode(args.overlay), mask.mask, args.style, args.color), out)
    print(json.dumps({"attention": config.to_dict(), "mask_pixels": int(mask.mask.sum())}))
    return 0


def cmd_demo(args) -> int:
    from .demo import write_demo

    paths = write_demo(Path(args.directory), size=args.size, seed=args.seed)
    print(f"demo run config: {paths['config']}")
    return 0


# --------------------------------------------------------------------------- #
# parser
# --------------------------------------------------------------------------- #


def _add_tiling(p):
    p.add_argument("--workers", type=int, default=None, help="tile workers (default: $CBI_WORKERS or 1)")
    p.add_argument("--tile-size", type=int, default=512)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbi", description="Composite biomarker images from IHC stains.")
    parser.add_argument("--version", action="version", version=f"cbi {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an ANFIS pixel classifier")
    p.add_argument("samples", nargs="?", help="CSV with header r,g,b,class")
    p.add_argument("--synthetic", action="store_true", help="sample the built-in class ranges instead")
    p.add_argument("--per-class", type=int, default=30, help="synthetic points per class")
    p.add_argument("--holdout", type=int, default=None, help="points per class kept for testing")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--convergence-delta", type=float, default=1e-6)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report", help="per-epoch RMSE CSV (default: <output>.rmse.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("register", help="estimate a rigid transform source -> target")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--max-side", type=int, default=1024)
    p.add_argument("--angle-min", type=float, default=-10.0)
    p.add_argument("--angle-max", type=float, default=10.0)
    p.add_argument("--angle-step", type=float, default=0.5)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("run", help="full pipeline from a run config")
    p.add_argument("config")
    p.add_argument("--register", action="store_true", help="estimate transforms for profiles without one")
    p.add_argument("--verify-against", metavar="MANIFEST", help="refuse to run if inputs changed since MANIFEST")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--tile-size", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("filter", help="filter one biomarker image")
    p.add_argument("image")
    p.add_argument("--model", required=True)
    p.add_argument("--classes", type=_parse_classes, required=True, help="e.g. 3,4,5")
    p.add_argument("--transform", help="affine sidecar to apply first")
    p.add_argument("--reference", help="image whose dims define the aligned frame")
    p.add_argument("--open-radius", type=int, default=1)
    p.add_argument("--close-radius", type=int, default=2)
    p.add_argument("--min-area", type=int, default=25)
    p.add_argument("--no-clean", action="store_true", help="skip morphology")
    p.add_argument("-o", "--output", required=True)
    _add_tiling(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("composite", help="fuse filtered gray layers")
    p.add_argument("--layer", nargs="+", action="append", required=True,
                   metavar="ARG", help="PATH COLOR ORDER [NAME]; COLOR as r,g,b or #rrggbb")
    p.add_argument("--mode", choices=("replace", "blend"), default="replace")
    p.add_argument("--legend", help="also write a legend PNG here")
    p.add_argument("-o", "--output", required=True)
    _add_tiling(p)
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("attention", help="co-localization mask from filtered gray layers")
    p.add_argument("grays", nargs="+")
    p.add_argument("--window", type=int, default=65)
    p.add_argument("--thresholds", type=_parse_floats, default=(0.05,))
    p.add_argument("--close-radius", type=int, default=3)
    p.add_argument("--min-area", type=int, default=500)
    p.add_argument("--overlay", help="base image to draw the mask on")
    p.add_argument("--overlay-output")
    p.add_argument("--style", choices=("contour", "tint"), default="contour")
    p.add_argument("--color", type=_parse_color, default=(0, 255, 0))
    p.add_argument("-o", "--output", required=True)
    _add_tiling(p)
    p.set_defaults(func=cmd_attention)

    p = sub.add_parser("demo", help="write a synthetic CD30/PAX5 demo (images, model, configs)")
    p.add_argument("directory")
    p.add_argument("--size", type=int, default=2048)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CbiError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
