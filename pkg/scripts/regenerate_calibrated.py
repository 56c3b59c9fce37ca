"""Re-run the knob search and overwrite the shipped calibrated config."""

from pathlib import Path

import fabricflow
from fabricflow.bench import calibrate, predicted_speedups
from fabricflow.fabric import load_config, serialize_config
from fabricflow.pipeline import default_pipeline

base = load_config("wire-only")
pipeline = default_pipeline(base, 2)
cal = calibrate(pipeline, base)
target = Path(fabricflow.__file__).parent / "configs" / "calibrated.json"
target.write_text(serialize_config(cal), encoding="utf-8")
for size in (4096, 16384):
    print(size, predicted_speedups(cal, pipeline, size))
print(f"wrote {target}")
