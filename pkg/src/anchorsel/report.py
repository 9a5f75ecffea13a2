"""Render benchmark reports to JSON, CSV, and figure files.

Every report lands in three forms under the output directory: the
deterministic JSON payload, a CSV of the rows for spreadsheet use, and a
PNG figure summarizing the table. Wall-clock timings go to a separate
``timings.json`` so the main artifacts stay byte-identical across reruns.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .bench import BenchmarkReport


def write_report_csv(report: BenchmarkReport, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        if not report.rows:
            handle.write("")
            return
        columns = list(report.rows[0].keys())
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        for row in report.rows:
            writer.writerow(row)


def write_timings(report: BenchmarkReport, path) -> None:
    Path(path).write_text(
        json.dumps(report.runtimes, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def render_figure(report: BenchmarkReport, path) -> None:
    """One summary figure per report kind; skipped silently for empty reports."""
    if not report.rows:
        return
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    if report.kind == "compare":
        strategies = [row["strategy"] for row in report.rows]
        recalls = [row["exclusive_mode_recall"] for row in report.rows]
        ax.bar(range(len(strategies)), recalls, color="#4878b0")
        ax.set_xticks(range(len(strategies)))
        ax.set_xticklabels(strategies, rotation=30, ha="right")
        ax.set_ylabel("exclusive-mode recall")
        ax.set_ylim(0.0, 1.05)
        ax.set_title("Selection strategies on synthetic domains")
    elif report.kind == "budget_sweep":
        fractions = [row["fraction"] for row in report.rows]
        coverage = [row["exclusive_coverage"] for row in report.rows]
        ax.plot(fractions, coverage, marker="o", color="#4878b0")
        ax.set_xlabel("annotation budget fraction")
        ax.set_ylabel("exclusive-mode coverage")
        ax.set_ylim(0.0, 1.05)
        ax.set_title("Budget sweep")
    elif report.kind == "anchor_sweep":
        ks = [row["K"] for row in report.rows]
        sses = [row["sse"] for row in report.rows]
        recalls = [row["exclusive_mode_recall"] for row in report.rows]
        ax.plot(ks, sses, marker="o", color="#4878b0", label="clustering SSE")
        ax.set_xscale("log")
        ax.set_xlabel("anchor count K")
        ax.set_ylabel("SSE")
        twin = ax.twinx()
        twin.plot(ks, recalls, marker="s", color="#d1654f", label="recall")
        twin.set_ylabel("exclusive-mode recall")
        twin.set_ylim(0.0, 1.05)
        ax.set_title("Anchor-count sweep")
        handles, labels = ax.get_legend_handles_labels()
        handles2, labels2 = twin.get_legend_handles_labels()
        ax.legend(handles + handles2, labels + labels2, loc="center right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_report(report: BenchmarkReport, out_dir, stem: str) -> list[Path]:
    """Write <stem>.json/.csv/.png plus timings; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"{stem}.json"
    csv_path = out_dir / f"{stem}.csv"
    png_path = out_dir / f"{stem}.png"
    timing_path = out_dir / f"{stem}_timings.json"

    json_path.write_text(report.to_json(), encoding="utf-8")
    write_report_csv(report, csv_path)
    render_figure(report, png_path)
    write_timings(report, timing_path)
    written = [json_path, csv_path, timing_path]
    if png_path.exists():
        written.insert(2, png_path)
    return written
