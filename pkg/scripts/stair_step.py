"""Distributed-placement latency around the 4 KiB packet boundary, both ack modes."""

from fabricflow.bench import build, simulate_round
from fabricflow.fabric import load_config
from fabricflow.pipeline import default_pipeline

sizes = [1024, 2048, 4096, 4097, 6144, 8192, 8193, 12288, 16384]
base = load_config("wire-only")
print(f"{'size':>6} {'serialized-rtt':>15} {'pipelined-oneway':>17}")
for size in sizes:
    row = []
    for mode in ("serialized-rtt", "pipelined-oneway"):
        cfg = base.with_(ack_mode=mode)
        sc = build("distributed", default_pipeline(cfg, 2), cfg, buffer_bytes=size)
        row.append(simulate_round(sc, size)[0])
    print(f"{size:>6} {row[0]:>15} {row[1]:>17}")
