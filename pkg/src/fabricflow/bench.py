"""Placement scenarios, the repetition benchmark, and knob calibration."""

from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .channel import DataChannel, TransferRecord, chain
from .dtu import Network
from .engine import Engine
from .fabric import FabricConfig
from .kernel import Kernel
from .oracle import predict
from .pipeline import PLACEMENTS, PipelineSpec, default_pipeline, placement_path

DEFAULT_SIZES = tuple(2**k for k in range(8, 17))
DEFAULT_REPS = 50
DEFAULT_WARMUPS = 4

TARGET_BANDS = {"dist_vs_app": (0.45, 0.67), "dist_vs_central": (0.21, 0.28)}
CALIBRATION_SIZES = (4096, 16384)

# Searched in this key order, each axis ascending; the first point whose
# speedups land in both bands wins.
CALIBRATION_GRID = {
    "handling_cycles": tuple(range(0, 1001, 25)),
    "bridge_cross_ns": tuple(range(0, 2001, 10)),
    "per_byte_ns_cross": (0.0, 1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4),
    "per_byte_ns_local": (0.0, 1 / 64, 1 / 32, 1 / 16),
}
_KNOB_FIELDS = {
    "handling_cycles": "handling_cycles",
    "bridge_cross_ns": "bridge_overhead_cross_ns",
    "per_byte_ns_cross": "per_byte_ns_cross",
    "per_byte_ns_local": "per_byte_ns_local",
}
DEFAULT_KNOBS = ("handling_cycles", "bridge_cross_ns")


class NoFeasiblePoint(RuntimeError):
    def __init__(self, message: str, nearest: Optional[dict] = None):
        super().__init__(message)
        self.nearest = nearest


@dataclass
class Scenario:
    placement: str
    pipeline: PipelineSpec
    network: Network
    kernel: Kernel
    channels: list[DataChannel]
    tenant: str
    compute_ns: int = 0

    @property
    def engine(self) -> Engine:
        return self.network.engine

    @property
    def config(self) -> FabricConfig:
        return self.network.config


@dataclass
class ScenarioResult:
    placement: str
    size: int
    n_devices: int
    samples: list[int]
    warmups_discarded: int
    records: list[list[TransferRecord]] = field(default_factory=list, repr=False)

    @property
    def median(self) -> float:
        return statistics.median(self.samples)

    @property
    def minimum(self) -> int:
        return min(self.samples)

    @property
    def mean(self) -> float:
        return statistics.fmean(self.samples)

    @property
    def p95(self) -> float:
        ordered = sorted(self.samples)
        # nearest-rank percentile
        return ordered[max(0, math.ceil(0.95 * len(ordered)) - 1)]


def build(placement: str, pipeline: PipelineSpec, fabric: FabricConfig, *, tenant: str = "T",
          compute_ns: int = 0, buffer_bytes: int = 1 << 20, kernel: Optional[Kernel] = None) -> Scenario:
    """Wire up the channels a placement needs for ``pipeline``.

    Pass an existing ``kernel`` to place several tenants on one fabric.
    """
    if placement not in PLACEMENTS:
        raise ValueError(f"unknown placement {placement!r}")
    pipeline.validate(fabric)
    if placement == "central" and pipeline.pool_cpu is None:
        raise ValueError("central placement requires pool_cpu")
    if kernel is None:
        kernel = Kernel(Network(fabric))
    net = kernel.net
    path = placement_path(placement, pipeline)
    tiles = {t for hop in path for t in hop}
    acts = {}
    for tile in sorted(tiles):
        act = kernel.activity_on(tile) or kernel.create_activity(tile, tenant)
        if act.tenant != tenant:
            raise ValueError(f"tile {tile!r} belongs to tenant {act.tenant!r}")
        acts[tile] = act
    slot_bytes = max(64, fabric.control_msg_bytes)
    channels = []
    for src, dst in path:
        handle = kernel.establish_channel(acts[src], acts[dst], slots=1, slot_bytes=slot_bytes,
                                          buffer_bytes=buffer_bytes)
        device = fabric.tile(dst).kind == "device-control"
        channels.append(DataChannel(net, handle, compute_ns=compute_ns if device else 0))
    return Scenario(placement, pipeline, net, kernel, channels, tenant, compute_ns)


def simulate_round(scenario: Scenario, size: int) -> tuple[int, list[TransferRecord]]:
    """One full pipeline round, run until the fabric is idle again."""
    engine = scenario.engine
    engine.record(scenario.pipeline.app_tile, "round-start")
    marks = [len(ch.records) for ch in scenario.channels]
    fut = chain(scenario.channels, size, scenario.network)
    engine.run_until_idle()
    latency = fut.result()
    records = [ch.records[m] for ch, m in zip(scenario.channels, marks) if len(ch.records) > m]
    return latency, records


def run_scenario(scenario: Scenario, size: int, repetitions: int = DEFAULT_REPS,
                 warmups: int = DEFAULT_WARMUPS, seed: Optional[int] = None,
                 keep_records: bool = False) -> ScenarioResult:
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if warmups < 0:
        raise ValueError("warmups must be >= 0")
    if seed is not None:
        scenario.engine.rng.seed(seed)
    for _ in range(warmups):
        simulate_round(scenario, size)
    samples, records = [], []
    for _ in range(repetitions):
        latency, recs = simulate_round(scenario, size)
        samples.append(latency)
        if keep_records:
            records.append(recs)
    return ScenarioResult(scenario.placement, size, len(scenario.pipeline.devices), samples,
                          warmups, records)


def speedup(a: ScenarioResult, b: ScenarioResult) -> float:
    """How much faster ``a`` is than ``b``, relative to ``b``'s median."""
    if a.size != b.size:
        raise ValueError(f"size mismatch: {a.size} vs {b.size}")
    mb = b.median
    return (mb - a.median) / mb


def sweep(config: FabricConfig, n_devices: int = 2, sizes: Sequence[int] = DEFAULT_SIZES,
          repetitions: int = DEFAULT_REPS, warmups: int = DEFAULT_WARMUPS, seed: int = 0,
          placements: Iterable[str] = PLACEMENTS, compute_ns: int = 0,
          traces: Optional[dict] = None) -> list[ScenarioResult]:
    """Fresh scenario per (placement, size), results in that order."""
    pipeline = default_pipeline(config, n_devices)
    results = []
    for placement in placements:
        for size in sizes:
            sc = build(placement, pipeline, config, compute_ns=compute_ns,
                       buffer_bytes=max(size, 1))
            results.append(run_scenario(sc, size, repetitions, warmups, seed))
            if traces is not None:
                traces[(placement, size)] = sc.engine.trace
    return results


def speedup_table(results: list[ScenarioResult]) -> list[dict]:
    by_key = {(r.placement, r.size): r for r in results}
    rows = []
    for size in sorted({r.size for r in results}):
        dist = by_key.get(("distributed", size))
        if dist is None:
            continue
        row = {"size_bytes": size}
        if ("app-side", size) in by_key:
            row["dist_vs_app"] = speedup(dist, by_key[("app-side", size)])
        if ("central", size) in by_key:
            row["dist_vs_central"] = speedup(dist, by_key[("central", size)])
        rows.append(row)
    return rows


# -- calibration ---------------------------------------------------------------

def predicted_speedups(config: FabricConfig, pipeline: PipelineSpec, size: int) -> dict[str, float]:
    t_app = predict("app-side", pipeline, config, size)
    t_cen = predict("central", pipeline, config, size)
    t_dist = predict("distributed", pipeline, config, size)
    return {"dist_vs_app": (t_app - t_dist) / t_app, "dist_vs_central": (t_cen - t_dist) / t_cen}


def _band_miss(value: float, band: tuple[float, float]) -> float:
    lo, hi = band
    return max(lo - value, 0.0, value - hi)


def calibrate(pipeline: PipelineSpec, base: FabricConfig, targets: Optional[dict] = None,
              knobs: Sequence[str] = DEFAULT_KNOBS, sizes: Sequence[int] = CALIBRATION_SIZES,
              grid: Optional[dict] = None) -> FabricConfig:
    """Grid-search cost knobs until predicted speedups fall inside ``targets``."""
    targets = dict(TARGET_BANDS if targets is None else targets)
    grid = CALIBRATION_GRID if grid is None else grid
    if not knobs:
        raise ValueError("no knobs given: nothing to search")
    unknown = set(knobs) - set(grid)
    if unknown:
        raise ValueError(f"unknown knob(s): {', '.join(sorted(unknown))}")
    for name, (lo, hi) in targets.items():
        if name not in TARGET_BANDS:
            raise ValueError(f"unknown target {name!r}")
        if lo > hi:
            raise ValueError(f"band {name} is empty: [{lo}, {hi}]")
    if "dist_vs_app" in targets and "dist_vs_central" in targets:
        if targets["dist_vs_app"][0] < targets["dist_vs_central"][1]:
            raise ValueError("dist_vs_app band must lie above the dist_vs_central band")
    if base.jitter_ppm:
        base = base.with_(jitter_ppm=0)

    axes = [k for k in grid if k in knobs]
    best = None
    for point in itertools.product(*(grid[k] for k in axes)):
        cfg = base.with_(**{_KNOB_FIELDS[k]: v for k, v in zip(axes, point)})
        miss = 0.0
        observed = {}
        for size in sizes:
            sp = predicted_speedups(cfg, pipeline, size)
            observed[size] = sp
            miss += sum(_band_miss(sp[name], band) for name, band in targets.items())
        if miss == 0.0:
            return cfg
        if best is None or miss < best["miss"]:
            best = {"miss": miss, "knobs": dict(zip(axes, point)), "speedups": observed}
    raise NoFeasiblePoint(
        f"no grid point satisfies {targets}; nearest miss {best['miss']:.4f} at {best['knobs']}",
        nearest=best,
    )
