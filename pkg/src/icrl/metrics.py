"""Aggregation and export: mean curves, running-max curves, CSV/JSONL, SVG plots."""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass
from typing import Sequence

from icrl.loop import EpisodeLog

SUMMARY_COLUMNS = ("method", "task", "episode", "mean", "running_max_mean", "stderr")
COST_COLUMNS = ("method", "episodes", "calls", "tokens_in", "tokens_out")


@dataclass(frozen=True)
class MetricSeries:
    label: str
    values: list[float]


def running_max_series(values: Sequence[float]) -> list[float]:
    """Prefix maximum: element i is max(values[0..i])."""
    if not values:
        raise ValueError("running max of an empty series is undefined")
    out: list[float] = []
    best = -math.inf
    for value in values:
        best = max(best, value)
        out.append(best)
    return out


def aggregate_mean(series: Sequence[Sequence[float]]) -> list[float]:
    """Pointwise arithmetic mean across same-length series."""
    if not series:
        raise ValueError("nothing to aggregate")
    length = len(series[0])
    for s in series:
        if len(s) != length:
            raise ValueError(f"ragged series: expected length {length}, got {len(s)}")
    return [statistics.fmean(s[i] for s in series) for i in range(length)]


def stderr_across(values: Sequence[float]) -> float:
    """Sample standard deviation over sqrt(n); 0 for fewer than two values."""
    if len(values) < 2:
        return 0.0
    return statistics.stdev(values) / math.sqrt(len(values))


def format_mean_stderr(mean: float, stderr: float) -> str:
    """Report-table formatting, e.g. ``88 ± 0.7``."""
    return f"{mean:g} ± {stderr:.1f}"


# ---------------------------------------------------------------------------
# Log aggregation
# ---------------------------------------------------------------------------


def _series_by_problem(logs: Sequence[EpisodeLog], method: str) -> dict[str, list[float]]:
    per_problem: dict[str, list[tuple[int, float]]] = {}
    for log in logs:
        if log.method != method:
            continue
        per_problem.setdefault(log.problem_id, []).append((log.episode, log.metric))
    return {
        problem_id: [value for _, value in sorted(pairs)]
        for problem_id, pairs in sorted(per_problem.items())
    }


@dataclass(frozen=True)
class SummaryRow:
    method: str
    task: str
    episode: int
    mean: float
    running_max_mean: float
    stderr: float


def summarize(logs: Sequence[EpisodeLog], task: str) -> list[SummaryRow]:
    """Per-episode mean and mean-of-running-max across problems, per method.

    The running max is taken per problem first and averaged after, so the
    curve reports the best-so-far quality reached on each problem.
    """
    rows: list[SummaryRow] = []
    for method in sorted({log.method for log in logs}):
        per_problem = _series_by_problem(logs, method)
        series = list(per_problem.values())
        if not series:
            continue
        means = aggregate_mean(series)
        running = [running_max_series(s) for s in series]
        running_means = aggregate_mean(running)
        for index in range(len(means)):
            rows.append(SummaryRow(
                method=method,
                task=task,
                episode=index + 1,
                mean=means[index],
                running_max_mean=running_means[index],
                stderr=stderr_across([r[index] for r in running]),
            ))
    return rows


def write_summary_csv(rows: Sequence[SummaryRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([
                row.method, row.task, row.episode,
                f"{row.mean:.6f}", f"{row.running_max_mean:.6f}", f"{row.stderr:.6f}",
            ])


def write_cost_csv(logs: Sequence[EpisodeLog], path: str) -> None:
    """Per-method ledger of episodes, model calls, and token totals."""
    totals: dict[str, list[int]] = {}
    for log in logs:
        row = totals.setdefault(log.method, [0, 0, 0, 0])
        row[0] += 1
        row[1] += log.calls
        row[2] += log.tokens_in
        row[3] += log.tokens_out
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(COST_COLUMNS)
        for method in sorted(totals):
            writer.writerow([method, *totals[method]])


def export_results(logs: Sequence[EpisodeLog], out_dir: str, task: str) -> dict[str, str]:
    """Write logs.jsonl, summary.csv, cost.csv, and curves.svg into ``out_dir``."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "logs": os.path.join(out_dir, "logs.jsonl"),
        "summary": os.path.join(out_dir, "summary.csv"),
        "cost": os.path.join(out_dir, "cost.csv"),
        "plot": os.path.join(out_dir, "curves.svg"),
    }
    with open(paths["logs"], "w", encoding="utf-8") as handle:
        for log in logs:
            handle.write(json.dumps(log.to_record(), sort_keys=True) + "\n")
    rows = summarize(logs, task)
    write_summary_csv(rows, paths["summary"])
    write_cost_csv(logs, paths["cost"])

    series: list[MetricSeries] = []
    for method in sorted({row.method for row in rows}):
        method_rows = sorted((r for r in rows if r.method == method), key=lambda r: r.episode)
        series.append(MetricSeries(label=f"{method} mean",
                                   values=[r.mean for r in method_rows]))
        series.append(MetricSeries(label=f"{method} running max",
                                   values=[r.running_max_mean for r in method_rows]))
    if series:
        emit_plot(series, paths["plot"], title=f"{task}: per-episode metric")
    return paths


# ---------------------------------------------------------------------------
# Deterministic SVG plotting
# ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
            "#e377c2", "#7f7f7f")

_MARGIN_LEFT = 56.0
_MARGIN_RIGHT = 16.0
_MARGIN_TOP = 24.0
_MARGIN_BOTTOM = 40.0


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def emit_plot(series: Sequence[MetricSeries], path: str, title: str = "",
              x_label: str = "episode", y_label: str = "metric",
              width: int = 640, height: int = 400) -> None:
    """Write a static SVG line chart; byte-identical for identical input."""
    if not series:
        raise ValueError("at least one series is required")
    for s in series:
        if not s.values:
            raise ValueError(f"series {s.label!r} is empty")

    x_max = max(len(s.values) for s in series)
    y_values = [v for s in series for v in s.values]
    y_min = min(y_values)
    y_max = max(y_values)
    if y_min == y_max:
        y_min -= 1.0
        y_max += 1.0
    pad = 0.05 * (y_max - y_min)
    y_min -= pad
    y_max += pad

    plot_w = width - _MARGIN_LEFT - _MARGIN_RIGHT
    plot_h = height - _MARGIN_TOP - _MARGIN_BOTTOM

    def x_at(episode: int) -> float:
        if x_max == 1:
            return _MARGIN_LEFT + plot_w / 2
        return _MARGIN_LEFT + plot_w * (episode - 1) / (x_max - 1)

    def y_at(value: float) -> float:
        return _MARGIN_TOP + plot_h * (1 - (value - y_min) / (y_max - y_min))

    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    )
    parts.append(f'<rect width="{width}" height="{height}" fill="#ffffff"/>')
    if title:
        parts.append(
            f'<text x="{_fmt(width / 2)}" y="16" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{_escape(title)}</text>'
        )

    axis_bottom = _MARGIN_TOP + plot_h
    parts.append(
        f'<line x1="{_fmt(_MARGIN_LEFT)}" y1="{_fmt(_MARGIN_TOP)}" '
        f'x2="{_fmt(_MARGIN_LEFT)}" y2="{_fmt(axis_bottom)}" stroke="#000000"/>'
    )
    parts.append(
        f'<line x1="{_fmt(_MARGIN_LEFT)}" y1="{_fmt(axis_bottom)}" '
        f'x2="{_fmt(_MARGIN_LEFT + plot_w)}" y2="{_fmt(axis_bottom)}" stroke="#000000"/>'
    )

    for tick in range(5):
        value = y_min + (y_max - y_min) * tick / 4
        y = y_at(value)
        parts.append(
            f'<line x1="{_fmt(_MARGIN_LEFT - 4)}" y1="{_fmt(y)}" '
            f'x2="{_fmt(_MARGIN_LEFT)}" y2="{_fmt(y)}" stroke="#000000"/>'
        )
        parts.append(
            f'<text x="{_fmt(_MARGIN_LEFT - 8)}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{_fmt(value)}</text>'
        )
    x_tick_step = max(1, (x_max - 1) // 9 or 1)
    for episode in range(1, x_max + 1, x_tick_step):
        x = x_at(episode)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{_fmt(axis_bottom)}" '
            f'x2="{_fmt(x)}" y2="{_fmt(axis_bottom + 4)}" stroke="#000000"/>'
        )
        parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(axis_bottom + 16)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{episode}</text>'
        )
    parts.append(
        f'<text x="{_fmt(_MARGIN_LEFT + plot_w / 2)}" y="{_fmt(height - 8)}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="11">{_escape(x_label)}</text>'
    )
    parts.append(
        f'<text x="14" y="{_fmt(_MARGIN_TOP + plot_h / 2)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11" '
        f'transform="rotate(-90 14 {_fmt(_MARGIN_TOP + plot_h / 2)})">{_escape(y_label)}</text>'
    )

    for index, s in enumerate(series):
        color = _PALETTE[index % len(_PALETTE)]
        points = " ".join(
            f"{_fmt(x_at(i + 1))},{_fmt(y_at(v))}" for i, v in enumerate(s.values)
        )
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        legend_y = _MARGIN_TOP + 14 * index + 6
        legend_x = _MARGIN_LEFT + plot_w - 150
        parts.append(
            f'<line x1="{_fmt(legend_x)}" y1="{_fmt(legend_y)}" '
            f'x2="{_fmt(legend_x + 18)}" y2="{_fmt(legend_y)}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{_fmt(legend_x + 22)}" y="{_fmt(legend_y + 3)}" '
            f'font-family="sans-serif" font-size="10">{_escape(s.label)}</text>'
        )

    parts.append("</svg>")
    with open(path, "wb") as handle:
        handle.write("\n".join(parts).encode("utf-8"))
        handle.write(b"\n")


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
