"""Closed-form latency predictor.

Deliberately shares no cost arithmetic with the event simulation: every
quantity here is recomputed from raw config fields, so agreement between
:func:`predict` and a simulated run is a genuine two-implementation check.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

from .fabric import FabricConfig
from .pipeline import PipelineSpec


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class LegCost:
    src: str
    dst: str
    size: int
    packet_ns: int
    notify_ns: int
    handling_ns: int

    @property
    def total(self) -> int:
        return self.packet_ns + self.notify_ns + self.handling_ns


def _half_up(x: Fraction) -> int:
    return (2 * x.numerator + x.denominator) // (2 * x.denominator)


def _clock_ns(config: FabricConfig, tile_id: str) -> int:
    clock = next(t.clock_hz for t in config.tiles if t.id == tile_id)
    return _half_up(Fraction(config.handling_cycles * 10**9, clock))


def _link(config: FabricConfig, src: str, dst: str):
    machine = {t.id: t.machine for t in config.tiles}
    if machine[src] == machine[dst]:
        return (config.intra_machine_rtt_ns, config.bridge_overhead_local_ns,
                Fraction(config.per_byte_ns_local))
    return (config.inter_machine_rtt_ns, config.bridge_overhead_cross_ns,
            Fraction(config.per_byte_ns_cross))


def leg_cost(config: FabricConfig, src: str, dst: str, size: int) -> LegCost:
    rtt, bridge, pb = _link(config, src, dst)
    pkt = config.packet_bytes
    n_packets = -(-size // pkt)
    if n_packets == 0:
        packets = 0
    elif config.ack_mode == "serialized-rtt":
        full, tail = divmod(size, pkt)
        packets = n_packets * (rtt + 2 * bridge) + full * _half_up(pkt * pb)
        if tail:
            packets += _half_up(tail * pb)
    else:
        packets = (rtt // 2 + bridge + _half_up(size * pb)
                   + (n_packets - 1) * _half_up(pkt * pb))
    notify = rtt // 2 + bridge + _half_up(config.control_msg_bytes * pb)
    handling = _clock_ns(config, src) + _clock_ns(config, dst)
    return LegCost(src, dst, size, packets, notify, handling)


def push_leg(config: FabricConfig, src: str, dst: str, size: int) -> int:
    """Push start at ``src`` until the notify has been handled at ``dst``."""
    return leg_cost(config, src, dst, size).total


def predict_legs(placement: str, pipeline: PipelineSpec, config: FabricConfig,
                 size: int) -> list[LegCost]:
    app, devs, cpu = pipeline.app_tile, pipeline.devices, pipeline.pool_cpu
    if placement == "app-side":
        legs = []
        for d in devs:
            legs.append(leg_cost(config, app, d, size))
            legs.append(leg_cost(config, d, app, size))
        return legs
    if placement == "central":
        if cpu is None:
            raise OracleError("central placement needs a pool cpu")
        legs = [leg_cost(config, app, cpu, size)]
        for d in devs:
            legs.append(leg_cost(config, cpu, d, size))
            legs.append(leg_cost(config, d, cpu, size))
        legs.append(leg_cost(config, cpu, app, size))
        return legs
    if placement == "distributed":
        legs = [leg_cost(config, app, devs[0], size)]
        for a, b in zip(devs, devs[1:]):
            legs.append(leg_cost(config, a, b, size))
        legs.append(leg_cost(config, devs[-1], app, size))
        return legs
    raise OracleError(f"unknown placement {placement!r}")


def predict(placement: str, pipeline: PipelineSpec, config: FabricConfig, size: int,
            compute_ns: int = 0) -> int:
    """End-to-end latency of one pipeline round, in ns."""
    if config.jitter_ppm:
        raise OracleError("the predictor is jitter-free; disable jitter_ppm")
    total = sum(leg.total for leg in predict_legs(placement, pipeline, config, size))
    return total + compute_ns * len(pipeline.devices)


# -- validation against the simulator ----------------------------------------

DEFAULT_SIZES = tuple(2**k for k in range(8, 17))


@dataclass
class Mismatch:
    placement: str
    size: int
    n_devices: int
    mode: str
    config: str
    sim_ns: int
    oracle_ns: int
    first_divergent_leg: int | None = None


@dataclass
class ValidationReport:
    rows: list[tuple] = field(default_factory=list)
    mismatches: list[Mismatch] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def to_text(self) -> str:
        lines = [f"{len(self.rows)} cases checked, {len(self.mismatches)} mismatches"]
        for m in self.mismatches:
            where = "" if m.first_divergent_leg is None else f" (first divergent leg {m.first_divergent_leg})"
            lines.append(
                f"MISMATCH {m.placement} size={m.size} n={m.n_devices} mode={m.mode} "
                f"config={m.config}: sim={m.sim_ns} oracle={m.oracle_ns}{where}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["placement", "size", "n_devices", "mode", "config", "sim_ns", "oracle_ns", "match"])
        w.writerows(self.rows)
        return buf.getvalue()


def validate_against_sim(configs: dict[str, FabricConfig], sizes=DEFAULT_SIZES,
                         n_devices=(1, 2, 3, 4), modes=("serialized-rtt", "pipelined-oneway"),
                         placements=("app-side", "central", "distributed"),
                         sim_configs: dict[str, FabricConfig] | None = None) -> ValidationReport:
    """Run predictor and simulator over the cross product and collect mismatches.

    ``sim_configs`` lets the simulator side run a different config under the
    same name, which is how the detector itself is tested.
    """
    from .bench import build, simulate_round
    from .pipeline import default_pipeline

    for cfg in configs.values():
        if cfg.jitter_ppm:
            raise OracleError("refusing to validate a jittered config")
    sim_configs = sim_configs or configs
    report = ValidationReport()
    for name in configs:
        for mode in modes:
            ocfg = configs[name].with_(ack_mode=mode)
            scfg = sim_configs[name].with_(ack_mode=mode)
            for n in n_devices:
                pipeline = default_pipeline(ocfg, n)
                for placement in placements:
                    scenario = build(placement, pipeline, scfg, buffer_bytes=max(sizes))
                    for size in sizes:
                        expected = predict(placement, pipeline, ocfg, size)
                        got, records = simulate_round(scenario, size)
                        match = got == expected
                        report.rows.append((placement, size, n, mode, name, got, expected,
                                            "yes" if match else "no"))
                        if not match:
                            report.mismatches.append(Mismatch(
                                placement, size, n, mode, name, got, expected,
                                _first_divergence(records, predict_legs(placement, pipeline, ocfg, size)),
                            ))
    return report


def _first_divergence(records, legs: list[LegCost]) -> int | None:
    for i, (rec, leg) in enumerate(zip(records, legs)):
        if rec.leg_ns is None or rec.leg_ns != leg.total:
            return i
    return None
