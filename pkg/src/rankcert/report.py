"""SVG charts and CSV tables with embedded run metadata.

Everything here is plain string building with fixed number formatting, so
identical inputs give byte-identical files.
"""
from __future__ import annotations

import io
import math
import os
import platform
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from rankcert.nes_data import CountrySummary
from rankcert.rank_inference import RankConfidenceSet
from rankcert.trend import Z_95, TrendSeries

ROW_HEIGHT = 14
LABEL_WIDTH = 150
PLOT_WIDTH = 460
MARGIN = 30
FONT = 'font-family="sans-serif" font-size="10"'


def run_metadata(config: Mapping[str, object]) -> dict[str, str]:
    """Config echo plus library versions; no timestamps or host names."""
    from rankcert import __version__

    meta = {
        str(k): ";".join(map(str, v)) if isinstance(v, (list, tuple)) else str(v)
        for k, v in sorted(config.items())
    }
    meta["rankcert_version"] = __version__
    meta["numpy_version"] = np.__version__
    meta["python_version"] = platform.python_version()
    return meta


def _comment_safe(text: str) -> str:
    return text.replace("--", "- -").replace("\n", " ")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _svg(width: float, height: float, body: list[str], metadata: Mapping[str, str] | None) -> str:
    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    if metadata:
        out.append("<!--")
        out.extend(f"  {_comment_safe(k)}: {_comment_safe(v)}" for k, v in metadata.items())
        out.append("-->")
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">'
    )
    out.extend("  " + line for line in body)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _nice_ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


class _Scale:
    def __init__(self, lo: float, hi: float, px_lo: float, px_hi: float):
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi, self.px_lo, self.px_hi = lo, hi, px_lo, px_hi

    def __call__(self, v: float) -> float:
        return self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)


def _x_axis(scale: _Scale, y: float, ticks: Sequence[float], label: str) -> list[str]:
    body = [
        f'<line class="axis" x1="{_fmt(scale.px_lo)}" y1="{_fmt(y)}" '
        f'x2="{_fmt(scale.px_hi)}" y2="{_fmt(y)}" stroke="black"/>'
    ]
    for t in ticks:
        x = scale(t)
        body.append(f'<line class="tick" x1="{_fmt(x)}" y1="{_fmt(y)}" x2="{_fmt(x)}" y2="{_fmt(y + 4)}" stroke="black"/>')
        text = f"{t:g}"
        body.append(f'<text x="{_fmt(x)}" y="{_fmt(y + 14)}" text-anchor="middle" {FONT}>{text}</text>')
    mid = (scale.px_lo + scale.px_hi) / 2
    body.append(f'<text x="{_fmt(mid)}" y="{_fmt(y + 28)}" text-anchor="middle" {FONT}>{escape(label)}</text>')
    return body


def emit_forest_chart(
    summaries: Sequence[CountrySummary],
    metadata: Mapping[str, str] | None = None,
    title: str = "Mean score with 95% confidence interval",
) -> str:
    """One row per country, highest mean on top, whisker at mean +/- 1.96 se."""
    if not summaries:
        raise ValueError("no summaries to plot")
    rows = sorted(summaries, key=lambda s: (-s.mean, s.country))
    lo = min(s.mean - Z_95 * s.se for s in rows)
    hi = max(s.mean + Z_95 * s.se for s in rows)
    ticks = _nice_ticks(lo, hi)
    lo, hi = min([lo] + ticks), max([hi] + ticks)
    x = _Scale(lo, hi, LABEL_WIDTH, LABEL_WIDTH + PLOT_WIDTH)
    top = MARGIN
    height = top + ROW_HEIGHT * len(rows) + 50
    width = LABEL_WIDTH + PLOT_WIDTH + MARGIN

    body = [f'<text x="{_fmt(width / 2)}" y="14" text-anchor="middle" {FONT}>{escape(title)}</text>']
    for i, s in enumerate(rows):
        y = top + ROW_HEIGHT * (i + 0.5)
        body.append(f'<g class="row" data-country={quoteattr(s.country)}>')
        body.append(
            f'  <text x="{_fmt(LABEL_WIDTH - 6)}" y="{_fmt(y + 3)}" text-anchor="end" {FONT}>{escape(s.country)}</text>'
        )
        body.append(
            f'  <line class="ci" x1="{_fmt(x(s.mean - Z_95 * s.se))}" y1="{_fmt(y)}" '
            f'x2="{_fmt(x(s.mean + Z_95 * s.se))}" y2="{_fmt(y)}" stroke="black"/>'
        )
        body.append(f'  <circle class="point" cx="{_fmt(x(s.mean))}" cy="{_fmt(y)}" r="3" fill="black"/>')
        body.append("</g>")
    body += _x_axis(x, top + ROW_HEIGHT * len(rows) + 4, ticks, "Mean score")
    return _svg(width, height, body, metadata)


def emit_rank_chart(
    sets: Sequence[RankConfidenceSet],
    metadata: Mapping[str, str] | None = None,
    title: str = "Rank with simultaneous confidence set",
) -> str:
    """Countries by point rank; a bar spans [lower, upper], singletons are markers only."""
    if not sets:
        raise ValueError("no rank sets to plot")
    rows = sorted(sets, key=lambda s: (s.point_rank, s.id))
    p = len(rows)
    x = _Scale(1, max(p, 2), LABEL_WIDTH, LABEL_WIDTH + PLOT_WIDTH)
    top = MARGIN
    height = top + ROW_HEIGHT * p + 50
    width = LABEL_WIDTH + PLOT_WIDTH + MARGIN

    body = [f'<text x="{_fmt(width / 2)}" y="14" text-anchor="middle" {FONT}>{escape(title)}</text>']
    for i, s in enumerate(rows):
        y = top + ROW_HEIGHT * (i + 0.5)
        lower, upper = max(1, s.lower), min(p, s.upper)
        body.append(
            f'<g class="row" data-country={quoteattr(s.id)} data-lower="{lower}" data-upper="{upper}">'
        )
        body.append(
            f'  <text x="{_fmt(LABEL_WIDTH - 6)}" y="{_fmt(y + 3)}" text-anchor="end" {FONT}>{escape(s.id)}</text>'
        )
        if upper > lower:
            body.append(
                f'  <rect class="bar" x="{_fmt(x(lower))}" y="{_fmt(y - 3)}" '
                f'width="{_fmt(x(upper) - x(lower))}" height="6" fill="#9ecae1"/>'
            )
        body.append(f'  <circle class="point" cx="{_fmt(x(s.point_rank))}" cy="{_fmt(y)}" r="3" fill="black"/>')
        body.append("</g>")
    body += _x_axis(x, top + ROW_HEIGHT * p + 4, _nice_ticks(1, p), "Rank")
    return _svg(width, height, body, metadata)


def emit_trend_chart(
    series: TrendSeries,
    metadata: Mapping[str, str] | None = None,
) -> str:
    """Yearly means with 95% whiskers and a dashed line at the pooled mean.

    Years that deviate from the pooled mean are drawn as red squares.
    """
    if not series.points:
        raise ValueError("empty series")
    pts = series.points
    lo = min([p.ci_low for p in pts] + [series.country_mean])
    hi = max([p.ci_high for p in pts] + [series.country_mean])
    yticks = _nice_ticks(lo, hi)
    lo, hi = min([lo] + yticks), max([hi] + yticks)
    plot_w, plot_h = 480.0, 260.0
    left, top = 50.0, MARGIN
    first, last = pts[0].year, pts[-1].year
    xs = _Scale(first - 0.5, last + 0.5, left, left + plot_w)
    # svg y grows downwards
    ys = _Scale(lo, hi, top + plot_h, top)
    width, height = left + plot_w + MARGIN, top + plot_h + 50

    title = f"{series.country}: yearly mean with 95% confidence interval"
    body = [f'<text x="{_fmt(width / 2)}" y="14" text-anchor="middle" {FONT}>{escape(title)}</text>']
    body.append(
        f'<line class="country-mean" x1="{_fmt(left)}" y1="{_fmt(ys(series.country_mean))}" '
        f'x2="{_fmt(left + plot_w)}" y2="{_fmt(ys(series.country_mean))}" '
        f'stroke="gray" stroke-dasharray="4 3"/>'
    )
    for p in pts:
        cx = xs(p.year)
        body.append(f'<g class="year" data-year="{p.year}">')
        body.append(
            f'  <line class="ci" x1="{_fmt(cx)}" y1="{_fmt(ys(p.ci_low))}" '
            f'x2="{_fmt(cx)}" y2="{_fmt(ys(p.ci_high))}" stroke="black"/>'
        )
        cy = ys(p.mean)
        if p.deviates_from_country_mean:
            body.append(
                f'  <rect class="point flagged" x="{_fmt(cx - 3.5)}" y="{_fmt(cy - 3.5)}" '
                f'width="7" height="7" fill="#d62728"/>'
            )
        else:
            body.append(f'  <circle class="point" cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="3" fill="black"/>')
        body.append("</g>")
    axis_y = top + plot_h
    body.append(
        f'<line class="axis" x1="{_fmt(left)}" y1="{_fmt(axis_y)}" x2="{_fmt(left + plot_w)}" '
        f'y2="{_fmt(axis_y)}" stroke="black"/>'
    )
    for p in pts:
        body.append(
            f'<text x="{_fmt(xs(p.year))}" y="{_fmt(axis_y + 14)}" text-anchor="middle" {FONT}>{p.year}</text>'
        )
    body.append(
        f'<line class="axis" x1="{_fmt(left)}" y1="{_fmt(top)}" x2="{_fmt(left)}" '
        f'y2="{_fmt(axis_y)}" stroke="black"/>'
    )
    for t in yticks:
        body.append(
            f'<text x="{_fmt(left - 6)}" y="{_fmt(ys(t) + 3)}" text-anchor="end" {FONT}>{t:g}</text>'
        )
    return _svg(width, height, body, metadata)


def csv_with_metadata(table: str, metadata: Mapping[str, str] | None) -> str:
    """Prefix a CSV body with ``# key: value`` comment lines."""
    if not metadata:
        return table
    head = "".join(f"# {k}: {_comment_safe(v)}\n" for k, v in metadata.items())
    return head + table


def table_text(writer, *args) -> str:
    buf = io.StringIO()
    writer(*args, buf)
    return buf.getvalue()


@dataclass
class ReportBundle:
    """Named SVG charts and CSV tables sharing one metadata block."""

    metadata: dict[str, str]
    charts: dict[str, str] = field(default_factory=dict)
    tables: dict[str, str] = field(default_factory=dict)

    def add_table(self, name: str, body: str) -> None:
        self.tables[name] = csv_with_metadata(body, self.metadata)

    def write(self, out_dir: str | os.PathLike) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        for name, text in {**self.tables, **self.charts}.items():
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            written.append(path)
        return written
