"""Hand-written SVG line chart of median latency over transfer size."""

from __future__ import annotations

import csv
import io
import math
import statistics
from collections import defaultdict
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 800, 500
MARGIN = {"left": 80, "right": 170, "top": 40, "bottom": 60}
# Okabe-Ito, colour-blind safe
PALETTE = ("#0072B2", "#E69F00", "#009E73", "#D55E00", "#CC79A7",
           "#56B4E9", "#F0E442", "#000000", "#999999", "#882255")
SERIES_ORDER = ("app-side", "central", "distributed")


class PlotError(ValueError):
    pass


def _data_lines(text: str) -> list[str]:
    return [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def read_medians(text: str) -> dict[str, dict[int, float]]:
    """Median latency per (placement, size) from a summary or a sample CSV."""
    lines = _data_lines(text)
    if not lines:
        raise PlotError("CSV has no header")
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    fields = set(reader.fieldnames or ())
    if not {"placement", "size_bytes"} <= fields or not fields & {"median_ns", "latency_ns"}:
        raise PlotError(f"unexpected CSV columns: {sorted(fields)}")
    samples: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    column = "median_ns" if "median_ns" in fields else "latency_ns"
    try:
        for row in reader:
            samples[row["placement"]][int(row["size_bytes"])].append(float(row[column]))
    except (TypeError, ValueError, KeyError) as exc:
        raise PlotError(f"malformed CSV row: {exc}") from exc
    if not samples:
        raise PlotError("CSV contains no data rows")
    return {p: {s: statistics.median(v) for s, v in by_size.items()} for p, by_size in samples.items()}


def _nice_step(span: float) -> float:
    raw = span / 5
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 2.5, 5, 10):
        if m * mag >= raw:
            return m * mag
    return 10 * mag


def _fmt_size(n: int) -> str:
    if n >= 1024 and n % 1024 == 0:
        return f"{n // 1024}K"
    return str(n)


def render_svg(medians: dict[str, dict[int, float]], title: str = "Median latency by placement",
               header: str = "") -> str:
    series = sorted(medians, key=lambda p: (SERIES_ORDER.index(p) if p in SERIES_ORDER else 99, p))
    sizes = sorted({s for p in series for s in medians[p]})
    if any(s <= 0 for s in sizes):
        raise PlotError("sizes must be positive for a log2 axis")
    x_lo, x_hi = math.log2(sizes[0]), math.log2(sizes[-1])
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    y_max = max(v for p in series for v in medians[p].values())
    step = _nice_step(y_max * 1.05 or 1)
    y_hi = step * math.ceil(y_max * 1.05 / step) if y_max > 0 else step

    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(size: int) -> float:
        return left + (math.log2(size) - x_lo) / (x_hi - x_lo) * pw

    def sy(v: float) -> float:
        return top + ph - v / y_hi * ph

    out = []
    if header:
        out.append(f"<!--\n{escape(header).replace('--', '- -')}\n-->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
               f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">')
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>')

    tick = 0.0
    while tick <= y_hi + 1e-9:
        y = sy(tick)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{tick:g}</text>')
        tick += step
    for s in sizes:
        x = sx(s)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 20}" text-anchor="middle">{_fmt_size(s)}</text>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">'
               f'transfer size (bytes, log2 scale)</text>')
    out.append(f'<text x="20" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 20 {top + ph / 2:.1f})">median latency (ns)</text>')

    for i, name in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(s):.2f},{sy(v):.2f}" for s, v in sorted(medians[name].items()))
        out.append(f'<polyline class="series" data-placement="{escape(name)}" fill="none" '
                   f'stroke="{color}" stroke-width="2" points="{pts}"/>')
        for s, v in sorted(medians[name].items()):
            out.append(f'<circle cx="{sx(s):.2f}" cy="{sy(v):.2f}" r="3" fill="{color}"/>')
        ly = top + 20 + i * 22
        lx = left + pw + 20
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_csv(text: str, header: str = "") -> str:
    return render_svg(read_medians(text), header=header)
