"""Sweep all placements under both shipped configs and print the speedup tables."""

import argparse
from pathlib import Path

from fabricflow.cli import main

parser = argparse.ArgumentParser()
parser.add_argument("--out", default="results")
parser.add_argument("--devices", type=int, default=2)
args = parser.parse_args()

for name in ("wire-only", "calibrated"):
    print(f"== {name} ==")
    main(["sweep", "--config", name, "--devices", str(args.devices),
          "--out", str(Path(args.out) / name)])
