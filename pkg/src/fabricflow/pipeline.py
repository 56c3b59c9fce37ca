"""Pipeline and placement descriptors shared by the benchmark and the predictor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .fabric import FabricConfig

PLACEMENTS = ("app-side", "central", "distributed")


@dataclass(frozen=True)
class PipelineSpec:
    app_tile: str
    devices: tuple[str, ...]
    pool_cpu: Optional[str] = None

    def validate(self, config: FabricConfig) -> None:
        if not self.devices:
            raise ValueError("pipeline needs at least one device")
        if len(set(self.devices)) != len(self.devices):
            raise ValueError("pipeline devices must be distinct")
        app = config.tile(self.app_tile)
        for d in self.devices:
            tile = config.tile(d)
            if tile.kind != "device-control":
                raise ValueError(f"{d!r} is not a device-control tile")
            if tile.machine == app.machine:
                raise ValueError(f"device {d!r} shares a machine with the application")
        if self.pool_cpu is not None:
            cpu = config.tile(self.pool_cpu)
            if cpu.kind != "pool-cpu":
                raise ValueError(f"{self.pool_cpu!r} is not a pool-cpu tile")

    def tiles(self) -> set[str]:
        out = {self.app_tile, *self.devices}
        if self.pool_cpu is not None:
            out.add(self.pool_cpu)
        return out


def default_pipeline(config: FabricConfig, n_devices: int = 2) -> PipelineSpec:
    """First app-cpu, first ``n_devices`` device tiles and first pool-cpu of ``config``."""
    apps = config.tiles_of_kind("app-cpu")
    devices = config.tiles_of_kind("device-control")
    cpus = config.tiles_of_kind("pool-cpu")
    if not apps:
        raise ValueError("config has no app-cpu tile")
    if n_devices > len(devices):
        raise ValueError(f"config has only {len(devices)} device tiles, {n_devices} requested")
    return PipelineSpec(
        app_tile=apps[0].id,
        devices=tuple(t.id for t in devices[:n_devices]),
        pool_cpu=cpus[0].id if cpus else None,
    )


def placement_path(placement: str, pipeline: PipelineSpec) -> list[tuple[str, str]]:
    """Ordered (sender, receiver) tile pairs a placement pushes data through."""
    app, devs = pipeline.app_tile, list(pipeline.devices)
    if placement == "app-side":
        path = []
        for d in devs:
            path += [(app, d), (d, app)]
        return path
    if placement == "central":
        if pipeline.pool_cpu is None:
            raise ValueError("central placement requires a pool_cpu tile")
        cpu = pipeline.pool_cpu
        path = [(app, cpu)]
        for d in devs:
            path += [(cpu, d), (d, cpu)]
        return path + [(cpu, app)]
    if placement == "distributed":
        stops = [app, *devs, app]
        return list(zip(stops, stops[1:]))
    raise ValueError(f"unknown placement {placement!r}")
