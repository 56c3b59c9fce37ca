"""Static fabric description: machines, tiles, link latencies and cost knobs.

A :class:`FabricConfig` is immutable once validated and is shared read-only by
every simulation run and by the analytic predictor.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

TILE_KINDS = ("app-cpu", "pool-cpu", "device-control", "kernel")
ACK_MODES = ("serialized-rtt", "pipelined-oneway")

DEFAULT_CLOCK_HZ = {
    "app-cpu": 4_000_000_000,
    "pool-cpu": 4_000_000_000,
    "device-control": 1_000_000_000,
    "kernel": 4_000_000_000,
}

BUILTIN_CONFIGS = ("wire-only", "calibrated")


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration documents."""


@dataclass(frozen=True)
class TileSpec:
    id: str
    machine: str
    kind: str
    clock_hz: int


@dataclass(frozen=True)
class FabricConfig:
    machines: tuple[str, ...]
    tiles: tuple[TileSpec, ...]
    inter_machine_rtt_ns: int = 1000
    intra_machine_rtt_ns: int = 500
    packet_bytes: int = 4096
    per_byte_ns_cross: float = 0.0
    per_byte_ns_local: float = 0.0
    bridge_overhead_cross_ns: int = 0
    bridge_overhead_local_ns: int = 0
    handling_cycles: int = 0
    control_msg_bytes: int = 64
    ack_mode: str = "serialized-rtt"
    jitter_ppm: int = 0
    seed: int = 0
    _by_id: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {t.id: t for t in self.tiles})

    def tile(self, tile_id: str) -> TileSpec:
        try:
            return self._by_id[tile_id]
        except KeyError:
            raise KeyError(f"unknown tile {tile_id!r}") from None

    def tiles_of_kind(self, kind: str) -> list[TileSpec]:
        return [t for t in self.tiles if t.kind == kind]

    @property
    def kernel_tile(self) -> TileSpec:
        return self.tiles_of_kind("kernel")[0]

    def with_(self, **changes) -> "FabricConfig":
        """Return a validated copy with ``changes`` applied."""
        cfg = replace(self, **changes)
        validate(cfg)
        return cfg


@dataclass(frozen=True)
class Hop:
    src: str
    dst: str
    locality: str  # "cross-machine" or "local"


def make_hop(config: FabricConfig, src: str, dst: str) -> Hop:
    if src == dst:
        raise ValueError(f"hop endpoints must differ, got {src!r} twice")
    a, b = config.tile(src), config.tile(dst)
    return Hop(src, dst, "local" if a.machine == b.machine else "cross-machine")


def one_way_latency(config: FabricConfig, hop: Hop) -> int:
    """Wire latency of a single traversal of ``hop`` in ns (half the RTT)."""
    a, b = config.tile(hop.src), config.tile(hop.dst)
    if a.machine == b.machine:
        return config.intra_machine_rtt_ns // 2
    return config.inter_machine_rtt_ns // 2


def bridge_overhead(config: FabricConfig, hop: Hop) -> int:
    if hop.locality == "local":
        return config.bridge_overhead_local_ns
    return config.bridge_overhead_cross_ns


def per_byte_ns(config: FabricConfig, hop: Hop) -> float:
    if hop.locality == "local":
        return config.per_byte_ns_local
    return config.per_byte_ns_cross


def byte_cost(nbytes: int, per_byte: float) -> int:
    """Serialization time of ``nbytes``, rounded half-up to whole ns."""
    if nbytes == 0 or per_byte == 0:
        return 0
    return int(math.floor(nbytes * per_byte + 0.5))


def handling_ns(config: FabricConfig, tile: TileSpec) -> int:
    """Time for one protocol step on ``tile``, derived from its clock."""
    # half-up rounding in integer arithmetic
    num = config.handling_cycles * 1_000_000_000
    return (2 * num + tile.clock_hz) // (2 * tile.clock_hz)


def validate(config: FabricConfig) -> None:
    if not config.machines:
        raise ConfigError("machines: at least one machine is required")
    if len(set(config.machines)) != len(config.machines):
        raise ConfigError("machines: identifiers must be unique")
    ids = [t.id for t in config.tiles]
    if len(set(ids)) != len(ids):
        raise ConfigError("tiles: tile ids must be unique across the fabric")
    for t in config.tiles:
        if t.machine not in config.machines:
            raise ConfigError(f"tiles: tile {t.id!r} refers to unknown machine {t.machine!r}")
        if t.kind not in TILE_KINDS:
            raise ConfigError(f"tiles: tile {t.id!r} has unknown kind {t.kind!r}")
        if not isinstance(t.clock_hz, int) or t.clock_hz <= 0:
            raise ConfigError(f"tiles: tile {t.id!r} needs clock_hz > 0")
    n_kernel = sum(t.kind == "kernel" for t in config.tiles)
    if n_kernel != 1:
        raise ConfigError(f"tiles: exactly one kernel tile required, found {n_kernel}")
    inter, intra = config.inter_machine_rtt_ns, config.intra_machine_rtt_ns
    if not intra > 0:
        raise ConfigError("latency: intra_rtt_ns must be > 0")
    if inter < intra:
        raise ConfigError("latency: inter_rtt_ns must be >= intra_rtt_ns")
    if inter % 2 or intra % 2:
        raise ConfigError("latency: RTTs must be even so one-way latency is integral")
    if config.packet_bytes <= 0:
        raise ConfigError("protocol: packet_bytes must be > 0")
    if config.ack_mode not in ACK_MODES:
        raise ConfigError(f"protocol: ack_mode must be one of {ACK_MODES}")
    for name in (
        "per_byte_ns_cross",
        "per_byte_ns_local",
        "bridge_overhead_cross_ns",
        "bridge_overhead_local_ns",
        "handling_cycles",
        "control_msg_bytes",
        "jitter_ppm",
    ):
        if getattr(config, name) < 0:
            raise ConfigError(f"protocol: {name} must be >= 0")
    for name in ("bridge_overhead_cross_ns", "bridge_overhead_local_ns", "handling_cycles"):
        if not isinstance(getattr(config, name), int):
            raise ConfigError(f"protocol: {name} must be an integer")


# -- (de)serialization --------------------------------------------------------

_TOP_KEYS = {"machines", "tiles", "latency", "protocol", "jitter_ppm", "seed"}
_TILE_KEYS = {"id", "machine", "kind", "clock_hz"}
_LATENCY_KEYS = {"inter_rtt_ns": "inter_machine_rtt_ns", "intra_rtt_ns": "intra_machine_rtt_ns"}
_PROTOCOL_KEYS = {
    "packet_bytes": "packet_bytes",
    "control_msg_bytes": "control_msg_bytes",
    "ack_mode": "ack_mode",
    "handling_cycles": "handling_cycles",
    "per_byte_ns_cross": "per_byte_ns_cross",
    "per_byte_ns_local": "per_byte_ns_local",
    "bridge_cross_ns": "bridge_overhead_cross_ns",
    "bridge_local_ns": "bridge_overhead_local_ns",
}


def _check_keys(obj: Any, allowed, where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _num(value: Any, where: str, integral: bool = True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number")
    if integral:
        if isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(f"{where}: expected an integer")
            value = int(value)
    return value


def config_from_dict(doc: dict) -> FabricConfig:
    _check_keys(doc, _TOP_KEYS, "config")
    for required in ("machines", "tiles"):
        if required not in doc:
            raise ConfigError(f"config: missing required key {required!r}")
    machines = doc["machines"]
    if not isinstance(machines, list) or not all(isinstance(m, str) for m in machines):
        raise ConfigError("machines: expected an array of strings")
    if not isinstance(doc["tiles"], list):
        raise ConfigError("tiles: expected an array")
    tiles = []
    for i, t in enumerate(doc["tiles"]):
        _check_keys(t, _TILE_KEYS, f"tiles[{i}]")
        for required in ("id", "machine", "kind"):
            if required not in t:
                raise ConfigError(f"tiles[{i}]: missing required key {required!r}")
        kind = t["kind"]
        if kind not in TILE_KINDS:
            raise ConfigError(f"tiles[{i}]: unknown kind {kind!r}")
        clock = _num(t.get("clock_hz", DEFAULT_CLOCK_HZ[kind]), f"tiles[{i}].clock_hz")
        tiles.append(TileSpec(str(t["id"]), str(t["machine"]), kind, clock))

    kwargs: dict[str, Any] = {}
    latency = doc.get("latency", {})
    _check_keys(latency, _LATENCY_KEYS, "latency")
    for key, attr in _LATENCY_KEYS.items():
        if key in latency:
            kwargs[attr] = _num(latency[key], f"latency.{key}")
    protocol = doc.get("protocol", {})
    _check_keys(protocol, _PROTOCOL_KEYS, "protocol")
    for key, attr in _PROTOCOL_KEYS.items():
        if key not in protocol:
            continue
        value = protocol[key]
        if key == "ack_mode":
            if not isinstance(value, str):
                raise ConfigError("protocol.ack_mode: expected a string")
            kwargs[attr] = value
        else:
            kwargs[attr] = _num(value, f"protocol.{key}", integral=not key.startswith("per_byte"))
    for key in ("jitter_ppm", "seed"):
        if key in doc:
            kwargs[key] = _num(doc[key], key)

    cfg = FabricConfig(machines=tuple(machines), tiles=tuple(tiles), **kwargs)
    validate(cfg)
    return cfg


def parse_config(text: str) -> FabricConfig:
    """Parse a JSON configuration document into a validated FabricConfig."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc)


def config_to_dict(config: FabricConfig) -> dict:
    rev_latency = {v: k for k, v in _LATENCY_KEYS.items()}
    rev_protocol = {v: k for k, v in _PROTOCOL_KEYS.items()}
    flat = asdict(config)
    flat.pop("_by_id", None)
    return {
        "machines": list(config.machines),
        "tiles": [asdict(t) for t in config.tiles],
        "latency": {rev_latency[a]: flat[a] for a in rev_latency},
        "protocol": {rev_protocol[a]: flat[a] for a in rev_protocol},
        "jitter_ppm": config.jitter_ppm,
        "seed": config.seed,
    }


def serialize_config(config: FabricConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2) + "\n"


def config_hash(config: FabricConfig) -> str:
    canon = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(name_or_path: str | Path) -> FabricConfig:
    """Load a built-in config by name or a config file by path."""
    if str(name_or_path) in BUILTIN_CONFIGS:
        text = resources.files("fabricflow.configs").joinpath(f"{name_or_path}.json").read_text("utf-8")
    else:
        text = Path(name_or_path).read_text(encoding="utf-8")
    return parse_config(text)
