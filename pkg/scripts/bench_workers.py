"""Time the per-pixel stages of a demo run across worker counts and tile sizes."""

import argparse
import os
import tempfile
from pathlib import Path

from cbi.demo import write_demo
from cbi.pipeline import load_run_config, run

PER_PIXEL = ("align", "filter", "morph", "composite", "attention")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=2048)
    parser.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8])
    parser.add_argument("--tile-sizes", type=int, nargs="+", default=[256, 512])
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        config_path = write_demo(Path(tmp), args.size)["config"]
        print(f"{os.cpu_count()} CPU(s) visible")
        print("tile  workers  per-pixel s  speedup  cbi sha256")
        for tile in args.tile_sizes:
            base = None
            for workers in args.workers:
                manifest = run(load_run_config(config_path, workers=workers, tile_size=tile))
                secs = sum(v for k, v in manifest["stage_seconds"].items() if k in PER_PIXEL)
                base = base or secs
                digest = manifest["outputs"]["cbi.png"][:12]
                print(f"{tile:4d}  {workers:7d}  {secs:11.2f}  {base / secs:6.2f}x  {digest}")
        print("equal digests mean bit-identical composites")


if __name__ == "__main__":
    main()
