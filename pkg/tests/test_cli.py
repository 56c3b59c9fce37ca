import json
import re

import pytest

from fabricflow.cli import main
from fabricflow.fabric import load_config, serialize_config
from fabricflow.plot import PlotError, plot_csv


def test_validate_builtin(capsys):
    assert main(["validate", "wire-only"]) == 0
    assert json.loads(capsys.readouterr().out)["latency"]["inter_rtt_ns"] == 1000


def test_validate_odd_rtt(tmp_path, capsys):
    doc = json.loads(serialize_config(load_config("wire-only")))
    doc["latency"]["inter_rtt_ns"] = 1001
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert main(["validate", str(p)]) == 1
    assert "even" in capsys.readouterr().err


def test_validate_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "nope.json")]) == 2


def test_run(capsys):
    assert main(["run", "--config", "wire-only", "--placement", "distributed", "--size", "4096",
                 "--reps", "3", "--warmups", "0"]) == 0
    assert "median=3750" in capsys.readouterr().out


def test_sweep_wire(tmp_path):
    assert main(["sweep", "--config", "wire-only", "--sizes", "4096", "--reps", "5",
                 "--out", str(tmp_path)]) == 0
    lines = [ln for ln in (tmp_path / "speedup.csv").read_text().splitlines() if not ln.startswith("#")]
    assert lines == ["size_bytes,dist_vs_app,dist_vs_central", "4096,0.375000,0.375000"]
    for name in ("samples.csv", "summary.csv", "speedup.csv"):
        text = (tmp_path / name).read_text()
        assert text.startswith("# fabricflow ")
        assert re.search(r"sha256:[0-9a-f]{16}", text)
        assert "# seed: 0" in text
    assert (tmp_path / "latency.svg").read_text().startswith("<!--")


def test_sweep_trace_export(tmp_path, monkeypatch):
    monkeypatch.setenv("FABRICFLOW_TRACE", "1")
    assert main(["sweep", "--config", "wire-only", "--sizes", "4096", "--reps", "2",
                 "--warmups", "1", "--out", str(tmp_path)]) == 0
    trace = (tmp_path / "trace-distributed-4096.txt").read_text().splitlines()
    assert sum(ln.endswith(" round-start") for ln in trace) == 3
    assert all(re.fullmatch(r"\d+ \S+ \S+", ln) for ln in trace)


SUMMARY = "placement,devices,size_bytes,median_ns,min_ns,mean_ns,p95_ns\n" + "".join(
    f"{p},2,{2**k},{(i + 1) * 1000 + k},0,0,0\n"
    for i, p in enumerate(("app-side", "central", "distributed")) for k in range(8, 17))


def test_plot_structure():
    svg = plot_csv(SUMMARY)
    polylines = re.findall(r'<polyline[^>]*points="([^"]*)"', svg)
    assert len(polylines) == 3
    assert all(len(p.split()) == 9 for p in polylines)
    assert 'width="800" height="500"' in svg
    assert "median latency (ns)" in svg and "log2" in svg
    for name in ("app-side", "central", "distributed"):
        assert f">{name}</text>" in svg


def test_plot_deterministic():
    assert plot_csv(SUMMARY) == plot_csv(SUMMARY)


def test_plot_x_sorted_and_log2():
    svg = plot_csv(SUMMARY)
    pts = re.findall(r'<polyline[^>]*points="([^"]*)"', svg)[0].split()
    xs = [float(p.split(",")[0]) for p in pts]
    gaps = {round(b - a, 2) for a, b in zip(xs, xs[1:])}
    assert xs == sorted(xs) and len(gaps) == 1


def test_plot_header_only_is_error():
    with pytest.raises(PlotError):
        plot_csv("placement,devices,size_bytes,median_ns,min_ns,mean_ns,p95_ns\n")


def test_plot_cli(tmp_path):
    src = tmp_path / "summary.csv"
    src.write_text(SUMMARY)
    assert main(["plot", str(src), "--out", str(tmp_path / "fig.svg")]) == 0
    assert (tmp_path / "fig.svg").exists()
    bad = tmp_path / "bad.csv"
    bad.write_text("placement,devices,size_bytes,median_ns\n")
    assert main(["plot", str(bad)]) == 1


def test_calibrate_cli(tmp_path, capsys):
    assert main(["calibrate", "--out", str(tmp_path)]) == 0
    assert load_config(tmp_path / "calibrated.json") == load_config("calibrated")
    assert main(["sweep", "--config", str(tmp_path / "calibrated.json"), "--sizes", "4096,16384",
                 "--reps", "3", "--out", str(tmp_path / "sw")]) == 0
    rows = [ln.split(",") for ln in (tmp_path / "sw" / "speedup.csv").read_text().splitlines()
            if ln[0].isdigit()]
    for _, app, cen in rows:
        assert 0.45 <= float(app) <= 0.67 and 0.21 <= float(cen) <= 0.28


def test_calibrate_cli_infeasible(tmp_path, capsys):
    assert main(["calibrate", "--bands", "0.9:0.95,0.01:0.02", "--out", str(tmp_path)]) == 1
    assert "nearest miss" in capsys.readouterr().err


def test_calibrate_cli_no_knobs(tmp_path, capsys):
    assert main(["calibrate", "--knobs", "", "--out", str(tmp_path)]) == 1
    assert "nothing to search" in capsys.readouterr().err


def test_oracle_check_cli(tmp_path, capsys):
    assert main(["oracle-check", "--sizes", "4096,8192", "--out", str(tmp_path)]) == 0
    assert "0 mismatches" in capsys.readouterr().out
    assert (tmp_path / "oracle-check.csv").read_text().startswith("placement,size,")
