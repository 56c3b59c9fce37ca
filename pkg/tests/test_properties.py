"""Property-based checks of the fabric, DTU, channel and predictor invariants."""

import math

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from _randomized import run_credit_workload
from fabricflow.bench import build, run_scenario, simulate_round
from fabricflow.dtu import AccessDenied, MemoryEndpoint, Network
from fabricflow.fabric import load_config, make_hop, one_way_latency, parse_config, serialize_config
from fabricflow.kernel import Kernel
from fabricflow.oracle import predict
from fabricflow.pipeline import PLACEMENTS, default_pipeline

WIRE = load_config("wire-only")
TILE_IDS = [t.id for t in WIRE.tiles if t.kind != "kernel"]
FRACTIONS = st.sampled_from([0.0, 1 / 64, 1 / 32, 1 / 16, 1 / 8, 0.25, 0.5, 1.0])


@st.composite
def configs(draw, local_le_cross=False, jitter=False):
    intra = 2 * draw(st.integers(1, 1000))
    inter = intra + 2 * draw(st.integers(0, 1000))
    bc = draw(st.integers(0, 2000))
    pbc = draw(FRACTIONS)
    return WIRE.with_(
        inter_machine_rtt_ns=inter,
        intra_machine_rtt_ns=intra,
        packet_bytes=draw(st.sampled_from([512, 1024, 4096, 8192])),
        bridge_overhead_cross_ns=bc,
        bridge_overhead_local_ns=draw(st.integers(0, bc if local_le_cross else 2000)),
        per_byte_ns_cross=pbc,
        per_byte_ns_local=draw(FRACTIONS.filter(lambda v: v <= pbc) if local_le_cross else FRACTIONS),
        handling_cycles=draw(st.integers(0, 3000)),
        control_msg_bytes=draw(st.sampled_from([0, 16, 64])),
        ack_mode=draw(st.sampled_from(["serialized-rtt", "pipelined-oneway"])),
        jitter_ppm=draw(st.integers(0, 300_000)) if jitter else 0,
        seed=draw(st.integers(0, 2**32)),
    )


SLOW = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@given(configs(), st.sampled_from(TILE_IDS), st.sampled_from(TILE_IDS))
def test_one_way_symmetric_and_cross_dominates(cfg, a, b):
    if a == b:
        return
    ab = one_way_latency(cfg, make_hop(cfg, a, b))
    assert ab == one_way_latency(cfg, make_hop(cfg, b, a))
    assert one_way_latency(cfg, make_hop(cfg, "app", "d1")) >= one_way_latency(cfg, make_hop(cfg, "d1", "d2"))


@given(configs(jitter=True))
def test_config_round_trip(cfg):
    assert parse_config(serialize_config(cfg)) == cfg


@SLOW
@given(configs(), st.sampled_from(PLACEMENTS), st.integers(1, 4), st.integers(0, 40000),
       st.integers(0, 500))
def test_simulation_matches_oracle(cfg, placement, n, size, compute):
    p = default_pipeline(cfg, n)
    sc = build(placement, p, cfg, compute_ns=compute, buffer_bytes=max(size, 1))
    latency, records = simulate_round(sc, size)
    assert latency == predict(placement, p, cfg, size, compute_ns=compute)
    for rec in records:
        times = rec.phase_times()
        assert times == sorted(times) and len(times) == 6


@SLOW
@given(configs(jitter=True), st.sampled_from(PLACEMENTS), st.integers(0, 20000))
def test_trace_determinism(cfg, placement, size):
    traces = []
    for _ in range(2):
        sc = build(placement, default_pipeline(cfg, 2), cfg, buffer_bytes=max(size, 1))
        run_scenario(sc, size, repetitions=3, warmups=1, seed=cfg.seed)
        traces.append(sc.engine.trace.export())
        eng = sc.engine
        assert eng.scheduled == eng.processed + eng.cancelled + eng.pending
        times = [e.time for e in eng.trace]
        assert times == sorted(times)
    assert traces[0] == traces[1]


@given(configs(), st.integers(0, 70000))
def test_packet_count(cfg, size):
    net = Network(cfg)
    auth = net.issue_authority()
    net.configure_endpoint(auth, "app", 0, MemoryEndpoint("app", "d1", 0, size, frozenset({"write"})))
    net.dtu("app").write_memory(0, 0, size)
    net.engine.run_until_idle()
    assert len(net.engine.trace.labels("pkt")) == math.ceil(size / cfg.packet_bytes)


def _write_time(cfg, size, src="app", dst="d1"):
    net = Network(cfg)
    auth = net.issue_authority()
    net.configure_endpoint(auth, src, 0, MemoryEndpoint(src, dst, 0, max(size, 1), frozenset({"write"})))
    fut = net.dtu(src).write_memory(0, 0, size)
    net.engine.run_until_idle()
    return fut.time


@given(configs(), st.integers(0, 40000), st.integers(0, 40000))
def test_transfer_time_monotone_in_size(cfg, s1, s2):
    lo, hi = sorted((s1, s2))
    assert _write_time(cfg, lo) <= _write_time(cfg, hi)


@given(st.integers(1, 15), st.sampled_from(["app", "cpu"]))
def test_stair_step_serialized(k, src):
    dst = "d1" if src == "app" else "d2"
    rtt = 1000 if src == "app" else 500
    pkt = WIRE.packet_bytes
    assert _write_time(WIRE, k * pkt + 1, src, dst) - _write_time(WIRE, k * pkt, src, dst) >= rtt


@given(configs(), st.sampled_from(PLACEMENTS), st.integers(1, 5), st.integers(0, 40000).map(lambda s: s // 64 * 64))
def test_predict_homogeneous(cfg, placement, n, size):
    # keep every per-byte product integral so rounding cannot break exact doubling
    cfg = cfg.with_(handling_cycles=cfg.handling_cycles // 4 * 4, control_msg_bytes=64)
    doubled = cfg.with_(
        inter_machine_rtt_ns=2 * cfg.inter_machine_rtt_ns,
        intra_machine_rtt_ns=2 * cfg.intra_machine_rtt_ns,
        bridge_overhead_cross_ns=2 * cfg.bridge_overhead_cross_ns,
        bridge_overhead_local_ns=2 * cfg.bridge_overhead_local_ns,
        per_byte_ns_cross=2 * cfg.per_byte_ns_cross,
        per_byte_ns_local=2 * cfg.per_byte_ns_local,
        handling_cycles=2 * cfg.handling_cycles,
    )
    p = default_pipeline(cfg, n)
    assert predict(placement, p, doubled, size) == 2 * predict(placement, p, cfg, size)


@given(configs(local_le_cross=True), st.integers(1, 6), st.integers(0, 70000))
def test_distributed_never_loses(cfg, n, size):
    p = default_pipeline(cfg, n)
    t_dist = predict("distributed", p, cfg, size)
    assert t_dist <= predict("central", p, cfg, size)
    assert t_dist <= predict("app-side", p, cfg, size)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_credit_conservation(seed):
    violations, _ = run_credit_workload(WIRE, seed)
    assert violations == []


@SLOW
@given(configs(), st.sampled_from(PLACEMENTS), st.integers(1, 4), st.integers(0, 20000))
def test_tenant_reach_matches_pipeline(cfg, placement, n, size):
    p = default_pipeline(cfg, n)
    sc = build(placement, p, cfg, tenant="T")
    expected = {p.app_tile, *p.devices} | ({p.pool_cpu} if placement == "central" else set())
    assert sc.kernel.check_transitive_reach("T") == expected
    assert sc.kernel.audit_endpoints() == []


@given(st.sampled_from(TILE_IDS), st.integers(0, 31), st.integers(0, 9000),
       st.sampled_from(["send", "write", "read"]))
def test_unconfigured_endpoints_deny(tile, ep, size, op):
    net = Network(WIRE)
    Kernel(net)
    dtu = net.dtu(tile)
    try:
        if op == "send":
            dtu.send(ep, min(size, 64))
        elif op == "write":
            dtu.write_memory(ep, 0, size)
        else:
            dtu.read_memory(ep, 0, size)
    except AccessDenied:
        pass
    else:
        raise AssertionError("operation without a channel succeeded")
    net.engine.run_until_idle()
    assert not any(e.cross_tile for e in net.engine.trace)
