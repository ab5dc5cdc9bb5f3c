"""Within-country index trends and cross-index correlation."""
from __future__ import annotations

import csv
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import IO

import numpy as np

from rankcert._special import student_t_two_sided
from rankcert.errors import DataError, DegenerateError
from rankcert.index import REQUIRE_ALL, CompletenessPolicy, expert_index, remap_scale
from rankcert.nes_data import Source, SurveyDataset, _field_float, read_metadata, read_records

Z_95 = 1.96


@dataclass(frozen=True)
class TrendPoint:
    country: str
    year: int
    n: int
    mean: float
    se: float
    deviates_from_country_mean: bool = False
    differs_from_previous_year: bool = False

    @property
    def ci_low(self) -> float:
        return self.mean - Z_95 * self.se

    @property
    def ci_high(self) -> float:
        return self.mean + Z_95 * self.se


@dataclass(frozen=True)
class TrendSeries:
    country: str
    points: tuple[TrendPoint, ...]
    country_mean: float
    scale_max: int = 5

    def __post_init__(self) -> None:
        years = [p.year for p in self.points]
        if any(b <= a for a, b in zip(years, years[1:])):
            raise DataError("trend years must be strictly increasing")

    @property
    def years(self) -> list[int]:
        return [p.year for p in self.points]


def _deviation_flags(means, ses, center: float) -> list[bool]:
    return [
        bool(center < m - Z_95 * s or center > m + Z_95 * s) for m, s in zip(means, ses)
    ]


def _step_flags(means, ses) -> list[bool]:
    return [
        bool(abs(m1 - m0) > Z_95 * math.hypot(s0, s1))
        for m0, m1, s0, s1 in zip(means, means[1:], ses, ses[1:])
    ]


def yearly_series(
    data: SurveyDataset | Sequence[SurveyDataset],
    country: str,
    policy: CompletenessPolicy = REQUIRE_ALL,
    item_ids: Iterable[int] | None = None,
) -> TrendSeries:
    """Per-year mean, se and 95% interval of one country's expert scores.

    ``data`` may be several datasets (e.g. one per survey wave). If they
    mix the 5- and 9-point scales, 9-point scores are remapped to the
    5-point scale before pooling. ``country_mean`` pools every expert score
    across all years.
    """
    datasets = [data] if isinstance(data, SurveyDataset) else list(data)
    if not datasets:
        raise DataError("no data")
    scales = {d.scale_max for d in datasets}
    remap = len(scales) > 1
    ids = None if item_ids is None else tuple(item_ids)

    by_year: dict[int, list[float]] = {}
    seen_country = False
    for ds in datasets:
        for r in ds:
            if r.country != country:
                continue
            seen_country = True
            score = expert_index(r, policy, ids)
            if score is None:
                continue
            if remap and ds.scale_max == 9:
                score = remap_scale(score)
            by_year.setdefault(r.year, []).append(score)
    if not seen_country:
        raise DataError(f"unknown country {country!r}")
    if not by_year:
        raise DataError(f"{country}: no expert satisfies the completeness policy")

    years = sorted(by_year)
    means, ses, ns = [], [], []
    for y in years:
        a = np.asarray(by_year[y])
        ns.append(a.size)
        means.append(float(a.mean()))
        ses.append(float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0)
    pooled = float(np.concatenate([np.asarray(by_year[y]) for y in years]).mean())
    dev = _deviation_flags(means, ses, pooled)
    step = [False] + _step_flags(means, ses)
    points = tuple(
        TrendPoint(country, y, n, m, s, d, st)
        for y, n, m, s, d, st in zip(years, ns, means, ses, dev, step)
    )
    return TrendSeries(country, points, pooled, 5 if remap else scales.pop())


def deviation_test(series: TrendSeries) -> list[bool]:
    """Per year: does the pooled country mean fall outside that year's 95% CI?"""
    if not series.points:
        raise DataError("empty series")
    return _deviation_flags(
        [p.mean for p in series.points], [p.se for p in series.points], series.country_mean
    )


def consecutive_year_test(series: TrendSeries) -> list[bool]:
    """Per adjacent pair: two-sided 5% z-test on the difference of yearly means."""
    return _step_flags([p.mean for p in series.points], [p.se for p in series.points])


def cross_index_correlation(
    x: Mapping[str, float] | Sequence[float],
    y: Mapping[str, float] | Sequence[float],
) -> tuple[float, float]:
    """Pearson correlation of two per-country indices and its two-sided p-value.

    Mappings are matched on their common keys; sequences are paired by
    position. The p-value comes from ``t = r * sqrt((n - 2) / (1 - r**2))``
    on ``n - 2`` degrees of freedom.
    """
    if isinstance(x, Mapping) and isinstance(y, Mapping):
        keys = [k for k in x if k in y]
        xs = np.array([x[k] for k in keys], dtype=float)
        ys = np.array([y[k] for k in keys], dtype=float)
    elif isinstance(x, Mapping) or isinstance(y, Mapping):
        raise DataError("pass two mappings or two sequences")
    else:
        xs, ys = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if xs.shape != ys.shape:
            raise DataError("sequences differ in length")
    n = xs.size
    if n < 3:
        raise DataError(f"need at least 3 matched pairs, got {n}")
    dx, dy = xs - xs.mean(), ys - ys.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateError("zero variance in one of the indices")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, student_t_two_sided(t, n - 2)


def parse_scores(source: Source) -> dict[str, float]:
    """Read a ``country,score`` file."""
    header, rows = read_records(source)
    if header[:2] != ["country", "score"]:
        raise DataError("score file header must be 'country,score'")
    out: dict[str, float] = {}
    for line, row in rows:
        if len(row) < 2 or not row[0].strip():
            raise DataError(f"line {line}: expected 'country,score'")
        if not row[1].strip():
            continue
        out[row[0].strip()] = _field_float(row[1], line, "score")
    return out


TREND_COLUMNS = ("year", "n", "mean", "se", "ci_low", "ci_high", "dev_flag", "step_flag")


def write_trend(series: TrendSeries, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TREND_COLUMNS)
    for p in series.points:
        writer.writerow([
            p.year, p.n, repr(p.mean), repr(p.se), repr(p.ci_low), repr(p.ci_high),
            int(p.deviates_from_country_mean), int(p.differs_from_previous_year),
        ])


def parse_trend(
    source: Source,
    country: str | None = None,
    country_mean: float | None = None,
    scale_max: int | None = None,
) -> TrendSeries:
    """Read a trend CSV back into a :class:`TrendSeries`.

    When ``source`` is a path, ``country``, ``country_mean`` and
    ``scale_max`` default to the values recorded in its metadata comments.
    """
    if isinstance(source, (str, os.PathLike)):
        meta = read_metadata(source)
        try:
            country = meta["country"] if country is None else country
            country_mean = float(meta["country_mean"]) if country_mean is None else country_mean
            if scale_max is None and "scale_max" in meta:
                scale_max = int(meta["scale_max"])
        except (KeyError, ValueError):
            raise DataError("trend file lacks country / country_mean metadata") from None
    if country is None or country_mean is None:
        raise DataError("country and country_mean are required")
    header, rows = read_records(source)
    if tuple(header) != TREND_COLUMNS:
        raise DataError(f"trend header must be {','.join(TREND_COLUMNS)}")
    points = []
    for line, row in rows:
        try:
            points.append(TrendPoint(
                country, int(row[0]), int(row[1]), float(row[2]), float(row[3]),
                bool(int(row[6])), bool(int(row[7])),
            ))
        except (ValueError, IndexError):
            raise DataError(f"line {line}: malformed trend row") from None
    return TrendSeries(country, tuple(points), country_mean, 5 if scale_max is None else scale_max)
