"""Command-line entry point (``fabricflow``)."""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bench import (
    DEFAULT_KNOBS,
    DEFAULT_REPS,
    DEFAULT_SIZES,
    DEFAULT_WARMUPS,
    TARGET_BANDS,
    NoFeasiblePoint,
    build,
    calibrate,
    predicted_speedups,
    run_scenario,
    speedup_table,
    sweep,
)
from .fabric import BUILTIN_CONFIGS, ConfigError, FabricConfig, config_hash, load_config, serialize_config
from .oracle import OracleError, validate_against_sim
from .pipeline import PLACEMENTS, default_pipeline
from .plot import PlotError, plot_csv, read_medians, render_svg

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


@dataclass
class RunManifest:
    config: str
    config_hash: str
    placements: tuple[str, ...]
    sizes: tuple[int, ...]
    repetitions: int
    warmups: int
    seed: int
    devices: int
    ack_mode: str
    outputs: tuple[str, ...] = ()

    def header(self, prefix: str = "# ") -> str:
        lines = [
            f"fabricflow {__version__}",
            f"config: {self.config} (sha256:{self.config_hash})",
            f"ack_mode: {self.ack_mode}",
            f"devices: {self.devices}",
            f"placements: {','.join(self.placements)}",
            f"sizes: {','.join(map(str, self.sizes))}",
            f"repetitions: {self.repetitions}",
            f"warmups: {self.warmups}",
            f"seed: {self.seed}",
            f"outputs: {','.join(self.outputs)}",
        ]
        return "".join(prefix + ln + "\n" for ln in lines)


def _sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not sizes or any(s < 0 for s in sizes):
        raise argparse.ArgumentTypeError("sizes must be a non-empty list of non-negative integers")
    return sizes


def _load(args) -> FabricConfig:
    cfg = load_config(args.config)
    if getattr(args, "ack_mode", None):
        cfg = cfg.with_(ack_mode=args.ack_mode)
    return cfg


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _csv(rows: Sequence[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _stat(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:.3f}"


def _trace_enabled() -> bool:
    return os.environ.get("FABRICFLOW_TRACE", "") == "1"


# -- subcommands -----------------------------------------------------------------

def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    sys.stdout.write(serialize_config(cfg))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    pipeline = default_pipeline(cfg, args.devices)
    sc = build(args.placement, pipeline, cfg, compute_ns=args.compute_ns, buffer_bytes=max(args.size, 1))
    res = run_scenario(sc, args.size, args.reps, args.warmups, args.seed)
    print(f"{res.placement} devices={res.n_devices} size={res.size} reps={len(res.samples)} "
          f"median={_stat(res.median)} min={res.minimum} mean={_stat(res.mean)} p95={_stat(res.p95)}")
    if args.out and _trace_enabled():
        _write(Path(args.out) / f"trace-{args.placement}-{args.size}.txt", sc.engine.trace.export())
    return EXIT_OK


def sweep_outputs(cfg: FabricConfig, manifest: RunManifest, compute_ns: int = 0,
                  traces: Optional[dict] = None) -> dict[str, str]:
    """Run the sweep and render every output file as text, keyed by file name."""
    results = sweep(cfg, manifest.devices, manifest.sizes, manifest.repetitions, manifest.warmups,
                    manifest.seed, manifest.placements, compute_ns, traces=traces)
    head = manifest.header()
    samples = _csv([(r.placement, r.n_devices, r.size, i, s)
                    for r in results for i, s in enumerate(r.samples)],
                   ["placement", "devices", "size_bytes", "rep", "latency_ns"])
    summary = _csv([(r.placement, r.n_devices, r.size, _stat(r.median), r.minimum, _stat(r.mean), _stat(r.p95))
                    for r in results],
                   ["placement", "devices", "size_bytes", "median_ns", "min_ns", "mean_ns", "p95_ns"])
    speed = _csv([(row["size_bytes"], _fmt(row.get("dist_vs_app", float("nan"))),
                   _fmt(row.get("dist_vs_central", float("nan")))) for row in speedup_table(results)],
                 ["size_bytes", "dist_vs_app", "dist_vs_central"])
    svg = render_svg(read_medians(summary), header=manifest.header(prefix=""))
    return {"samples.csv": head + samples, "summary.csv": head + summary,
            "speedup.csv": head + speed, "latency.svg": svg}


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    manifest = RunManifest(str(args.config), config_hash(cfg), tuple(PLACEMENTS), tuple(args.sizes),
                           args.reps, args.warmups, args.seed, args.devices, cfg.ack_mode,
                           ("samples.csv", "summary.csv", "speedup.csv", "latency.svg"))
    traces = {} if _trace_enabled() else None
    files = sweep_outputs(cfg, manifest, args.compute_ns, traces)
    for name, text in files.items():
        _write(out / name, text)
    for (placement, size), trace in (traces or {}).items():
        _write(out / f"trace-{placement}-{size}.txt", trace.export())
    sys.stdout.write(files["speedup.csv"])
    return EXIT_OK


def cmd_plot(args) -> int:
    text = Path(args.input).read_text(encoding="utf-8")
    svg = plot_csv(text)
    out = Path(args.out) if args.out else Path(args.input).with_suffix(".svg")
    if out.suffix != ".svg":
        out = out / "latency.svg"
    _write(out, svg)
    print(out)
    return EXIT_OK


def _bands(text: str) -> dict:
    parts = [p for p in text.split(",") if p]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("bands take the form app_lo:app_hi,central_lo:central_hi")
    try:
        (a_lo, a_hi), (c_lo, c_hi) = [tuple(float(x) for x in p.split(":")) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad bands {text!r}") from None
    return {"dist_vs_app": (a_lo, a_hi), "dist_vs_central": (c_lo, c_hi)}


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    knobs = tuple(k for k in args.knobs.split(",") if k)
    pipeline = default_pipeline(cfg, args.devices)
    try:
        cal = calibrate(pipeline, cfg, args.bands, knobs)
    except NoFeasiblePoint as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out) / "calibrated.json"
    _write(out, serialize_config(cal))
    for size in (4096, 16384):
        sp = predicted_speedups(cal, pipeline, size)
        print(f"size={size} dist_vs_app={_fmt(sp['dist_vs_app'])} dist_vs_central={_fmt(sp['dist_vs_central'])}")
    print(out)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    names = args.config_list or list(BUILTIN_CONFIGS)
    configs = {str(n): load_config(n) for n in names}
    modes = (args.ack_mode,) if args.ack_mode else ("serialized-rtt", "pipelined-oneway")
    try:
        report = validate_against_sim(configs, sizes=args.sizes, modes=modes)
    except OracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    sys.stdout.write(report.to_text())
    if args.out:
        _write(Path(args.out) / "oracle-check.csv", report.to_csv())
    return EXIT_OK if report.ok else EXIT_INTERNAL


# -- parser ------------------------------------------------------------------------

def _shared(p: argparse.ArgumentParser, config_default: Optional[str] = "calibrated") -> None:
    p.add_argument("--config", default=config_default, help="config file or built-in name")
    p.add_argument("--devices", type=int, default=2)
    p.add_argument("--sizes", type=_sizes, default=DEFAULT_SIZES)
    p.add_argument("--reps", type=int, default=DEFAULT_REPS)
    p.add_argument("--warmups", type=int, default=DEFAULT_WARMUPS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ack-mode", choices=("serialized-rtt", "pipelined-oneway"), default=None)
    p.add_argument("--out", default="results")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fabricflow", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fabricflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a config")
    p.add_argument("config_path", nargs="?")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run one placement at one size")
    _shared(p)
    p.add_argument("--placement", choices=PLACEMENTS, required=True)
    p.add_argument("--size", type=int, default=4096)
    p.add_argument("--compute-ns", type=int, default=0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="all placements across sizes")
    _shared(p)
    p.add_argument("--compute-ns", type=int, default=0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render an SVG from a summary or sample CSV")
    p.add_argument("input")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("calibrate", help="fit cost knobs to speedup bands")
    _shared(p, config_default="wire-only")
    p.add_argument("--bands", type=_bands, default=dict(TARGET_BANDS))
    p.add_argument("--knobs", default=",".join(DEFAULT_KNOBS))
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("oracle-check", help="compare simulator and closed-form predictor")
    _shared(p, config_default=None)
    p.add_argument("--config-list", nargs="*", default=None, help="configs to check (default: built-ins)")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    if args.command == "validate":
        args.config = args.config_path or args.config
        if not args.config:
            print("error: a config path is required", file=sys.stderr)
            return EXIT_INVALID
    if args.command == "oracle-check" and args.config and not args.config_list:
        args.config_list = [args.config]
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
