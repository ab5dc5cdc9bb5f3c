"""Expert-survey micro-data, country summaries and the item catalog.

The micro-data layout is one row per expert::

    country,year,expert_type,item_01,...,item_54

with empty cells for missing answers. Country summaries use
``country,n,mean,sd[,se]``. Lines starting with ``#`` are treated as
comments by every reader in this module, so files written with a metadata
header can be read back unchanged.
"""
from __future__ import annotations

import csv
import io
import math
import os
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import IO, Union

from rankcert.errors import DataError

N_ITEMS = 54
SCALES = (5, 9)
META_COLUMNS = ("country", "year", "expert_type")
ITEM_COLUMNS = tuple(f"item_{i:02d}" for i in range(1, N_ITEMS + 1))
RESPONSE_HEADER = META_COLUMNS + ITEM_COLUMNS
MIN_YEAR, MAX_YEAR = 1999, 2100

Source = Union[IO[str], str, os.PathLike]


# --------------------------------------------------------------------------
# Low level CSV helpers
# --------------------------------------------------------------------------

def _open_text(source: Source) -> IO[str]:
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        try:
            return open(path, newline="", encoding="utf-8")
        except FileNotFoundError:
            raise DataError(f"input file not found: {path}") from None
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror}") from None
    return source


def _blank_comments(lines: Iterable[str]) -> Iterator[str]:
    # comment lines become empty rows so csv.reader.line_num stays physical
    for line in lines:
        yield "\n" if line.lstrip().startswith("#") else line


def read_records(source: Source) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Read a comment-tolerant CSV into ``(header, [(line_number, row), ...])``.

    Blank lines and ``#`` comment lines are skipped. Header cells are
    stripped; duplicate header names raise :class:`DataError`.
    """
    handle = _open_text(source)
    close = handle is not source
    try:
        reader = csv.reader(_blank_comments(handle))
        header: list[str] | None = None
        rows: list[tuple[int, list[str]]] = []
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if header is None:
                header = [cell.strip().lstrip("﻿") for cell in row]
                seen: set[str] = set()
                for name in header:
                    if name in seen:
                        raise DataError(
                            f"line {reader.line_num}: duplicate header column {name!r}"
                        )
                    seen.add(name)
                continue
            rows.append((reader.line_num, row))
    finally:
        if close:
            handle.close()
    if header is None:
        raise DataError("missing header row")
    return header, rows


def read_metadata(path: str | os.PathLike) -> dict[str, str]:
    """Leading ``# key: value`` comment lines of a file written by this package."""
    out: dict[str, str] = {}
    with open(os.fspath(path), encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].partition(":")
            if sep:
                out[key.strip()] = value.strip()
    return out


def _field_int(text: str, line: int, column: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise DataError(
            f"line {line}, column {column}: expected an integer, got {text!r}"
        ) from None


def _field_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise DataError(
            f"line {line}, column {column}: expected a number, got {text!r}"
        ) from None
    if not math.isfinite(value):
        raise DataError(f"line {line}, column {column}: non-finite value {text!r}")
    return value


# --------------------------------------------------------------------------
# Micro-data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpertResponse:
    """One expert's ratings.

    ``items[i]`` holds the answer to item ``i + 1`` or ``None`` when missing.
    """

    country: str
    year: int
    expert_type: str
    items: tuple[int | None, ...]

    def __post_init__(self) -> None:
        if not self.country:
            raise DataError("country label must be nonempty")
        if not MIN_YEAR <= self.year <= MAX_YEAR:
            raise DataError(f"year {self.year} outside {MIN_YEAR}..{MAX_YEAR}")
        if len(self.items) != N_ITEMS:
            raise DataError(f"expected {N_ITEMS} items, got {len(self.items)}")
        for pos, value in enumerate(self.items, start=1):
            if value is not None and not 1 <= value <= max(SCALES):
                raise DataError(f"item_{pos:02d}: value {value} out of range")

    def item(self, item_id: int) -> int | None:
        if not 1 <= item_id <= N_ITEMS:
            raise DataError(f"item id {item_id} outside 1..{N_ITEMS}")
        return self.items[item_id - 1]

    def values(self, item_ids: Iterable[int] | None = None) -> list[int | None]:
        if item_ids is None:
            return list(self.items)
        return [self.item(i) for i in item_ids]

    @property
    def n_present(self) -> int:
        return sum(v is not None for v in self.items)


@dataclass(frozen=True)
class SurveyDataset:
    """Ordered, immutable collection of responses on one Likert scale."""

    responses: tuple[ExpertResponse, ...]
    scale_max: int = 9

    def __post_init__(self) -> None:
        object.__setattr__(self, "responses", tuple(self.responses))
        if self.scale_max not in SCALES:
            raise DataError(f"scale_max must be one of {SCALES}, got {self.scale_max}")
        for r in self.responses:
            for pos, value in enumerate(r.items, start=1):
                if value is not None and value > self.scale_max:
                    raise DataError(
                        f"{r.country} {r.year}: item_{pos:02d} value {value} "
                        f"exceeds scale maximum {self.scale_max}"
                    )

    def __len__(self) -> int:
        return len(self.responses)

    def __iter__(self) -> Iterator[ExpertResponse]:
        return iter(self.responses)

    def countries(self) -> list[str]:
        """Country labels in order of first appearance."""
        return list(dict.fromkeys(r.country for r in self.responses))

    def years(self) -> list[int]:
        return sorted({r.year for r in self.responses})

    def by_country(self) -> dict[str, list[ExpertResponse]]:
        out: dict[str, list[ExpertResponse]] = {}
        for r in self.responses:
            out.setdefault(r.country, []).append(r)
        return out

    def filter(self, *, country: str | None = None, year: int | None = None) -> SurveyDataset:
        kept = tuple(
            r for r in self.responses
            if (country is None or r.country == country)
            and (year is None or r.year == year)
        )
        return SurveyDataset(kept, self.scale_max)

    def to_csv(self, stream: IO[str]) -> None:
        """Write the dataset in the micro-data CSV layout."""
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(RESPONSE_HEADER)
        for r in self.responses:
            writer.writerow(
                [r.country, r.year, r.expert_type]
                + ["" if v is None else v for v in r.items]
            )


def concat_datasets(datasets: Sequence[SurveyDataset]) -> SurveyDataset:
    if not datasets:
        raise DataError("no datasets to combine")
    scales = {d.scale_max for d in datasets}
    if len(scales) != 1:
        raise DataError(f"cannot concatenate datasets on different scales {sorted(scales)}")
    return SurveyDataset(
        tuple(r for d in datasets for r in d.responses), datasets[0].scale_max
    )


def parse_responses(source: Source, scale_max: int = 9) -> SurveyDataset:
    """Parse micro-data CSV into a :class:`SurveyDataset`.

    Parameters
    ----------
    source : text stream or path
        CSV with header ``country,year,expert_type,item_01..item_54``.
        Columns may appear in any order; blank cells are missing answers.
    scale_max : {5, 9}
        Upper bound of the Likert scale every answer is checked against.

    Raises
    ------
    DataError
        On a missing or duplicated header column, a malformed row (the
        message names the line and column), or an out-of-range answer.
    """
    if scale_max not in SCALES:
        raise DataError(f"scale_max must be one of {SCALES}, got {scale_max}")
    header, rows = read_records(source)
    missing = [c for c in RESPONSE_HEADER if c not in header]
    if missing:
        raise DataError(f"header is missing column(s): {', '.join(missing[:5])}")
    extra = [c for c in header if c not in RESPONSE_HEADER]
    if extra:
        raise DataError(f"unexpected header column(s): {', '.join(extra)}")
    pos = {name: i for i, name in enumerate(header)}

    responses = []
    for line, row in rows:
        if len(row) != len(header):
            raise DataError(
                f"line {line}: expected {len(header)} fields, got {len(row)}"
            )
        country = row[pos["country"]].strip()
        if not country:
            raise DataError(f"line {line}, column country: empty country label")
        year = _field_int(row[pos["year"]], line, "year")
        if not MIN_YEAR <= year <= MAX_YEAR:
            raise DataError(f"line {line}, column year: year {year} out of range")
        items: list[int | None] = []
        for col in ITEM_COLUMNS:
            cell = row[pos[col]].strip()
            if not cell:
                items.append(None)
                continue
            value = _field_int(cell, line, col)
            if not 1 <= value <= scale_max:
                raise DataError(
                    f"line {line}, column {col}: value {value} outside 1..{scale_max}"
                )
            items.append(value)
        responses.append(
            ExpertResponse(country, year, row[pos["expert_type"]].strip(), tuple(items))
        )
    return SurveyDataset(tuple(responses), scale_max)


# --------------------------------------------------------------------------
# Country summaries
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CountrySummary:
    """Expert count, mean, sample SD and standard error for one country.

    ``degenerate`` marks single-expert summaries whose SD is undefined and
    is reported as 0.
    """

    country: str
    n: int
    mean: float
    sd: float
    se: float = field(default=math.nan)
    degenerate: bool = False

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DataError(f"{self.country}: n must be >= 1, got {self.n}")
        if not self.sd >= 0:
            raise DataError(f"{self.country}: sd must be >= 0, got {self.sd}")
        if math.isnan(self.se):
            object.__setattr__(self, "se", self.sd / math.sqrt(self.n))
        elif self.se < 0:
            raise DataError(f"{self.country}: se must be >= 0, got {self.se}")

    @classmethod
    def from_scores(cls, country: str, scores: Sequence[float]) -> CountrySummary:
        n = len(scores)
        if n == 0:
            raise DataError(f"{country}: no scores")
        mean = math.fsum(scores) / n
        if n == 1:
            return cls(country, 1, mean, 0.0, 0.0, degenerate=True)
        sd = math.sqrt(math.fsum((x - mean) ** 2 for x in scores) / (n - 1))
        return cls(country, n, mean, sd, sd / math.sqrt(n))


SUMMARY_COLUMNS = ("country", "n", "mean", "sd", "se")


def parse_summaries(source: Source) -> list[CountrySummary]:
    """Parse ``country,n,mean,sd[,se]`` rows; ``se`` defaults to sd/sqrt(n)."""
    header, rows = read_records(source)
    missing = [c for c in SUMMARY_COLUMNS[:4] if c not in header]
    if missing:
        raise DataError(f"summary header is missing column(s): {', '.join(missing)}")
    pos = {name: i for i, name in enumerate(header)}
    has_se = "se" in pos
    out = []
    seen: set[str] = set()
    for line, row in rows:
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        country = row[pos["country"]].strip()
        if not country:
            raise DataError(f"line {line}, column country: empty country label")
        if country in seen:
            raise DataError(f"line {line}: duplicate country {country!r}")
        seen.add(country)
        n = _field_int(row[pos["n"]], line, "n")
        if n < 1:
            raise DataError(f"line {line}, column n: n must be >= 1, got {n}")
        mean = _field_float(row[pos["mean"]], line, "mean")
        sd = _field_float(row[pos["sd"]], line, "sd")
        if sd < 0:
            raise DataError(f"line {line}, column sd: sd must be >= 0, got {sd}")
        se = math.nan
        if has_se and row[pos["se"]].strip():
            se = _field_float(row[pos["se"]], line, "se")
            if se < 0:
                raise DataError(f"line {line}, column se: se must be >= 0, got {se}")
        out.append(CountrySummary(country, n, mean, sd, se, degenerate=(n == 1)))
    return out


def write_summaries(summaries: Iterable[CountrySummary], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for s in summaries:
        writer.writerow([s.country, s.n, repr(float(s.mean)), repr(float(s.sd)), repr(float(s.se))])


# Country, N, NECI mean, NECI S.D. for the 2018 analysis sample, in printed rank order.
_NES2018 = (
    ("Indonesia", 24, 6.123, 1.497),
    ("Canada", 3, 6.105, 0.352),
    ("Qatar", 25, 6.040, 1.073),
    ("Netherlands", 15, 5.959, 0.946),
    ("Taiwan", 25, 5.856, 1.301),
    ("India", 36, 5.724, 1.421),
    ("USA", 17, 5.368, 1.396),
    ("France", 17, 5.322, 0.903),
    ("United Kingdom", 7, 5.217, 0.824),
    ("Ireland", 17, 5.041, 1.185),
    ("Spain", 25, 4.999, 0.998),
    ("Luxembourg", 10, 4.996, 1.610),
    ("Latvia", 14, 4.971, 1.086),
    ("Austria", 19, 4.937, 0.915),
    ("United Arab Emirates", 12, 4.887, 1.694),
    ("Thailand", 16, 4.859, 1.497),
    ("South Korea", 79, 4.846, 0.954),
    ("Slovenia", 22, 4.799, 0.806),
    ("China (PRC)", 28, 4.798, 0.802),
    ("Israel", 17, 4.788, 1.025),
    ("Cyprus", 28, 4.772, 0.982),
    ("Poland", 22, 4.769, 0.703),
    ("Switzerland", 15, 4.763, 1.284),
    ("Japan", 30, 4.725, 0.873),
    ("Sweden", 11, 4.677, 0.778),
    ("Germany", 24, 4.670, 1.039),
    ("Turkey", 32, 4.670, 1.147),
    ("Mexico", 25, 4.646, 1.157),
    ("Chile", 24, 4.640, 0.997),
    ("Argentina", 24, 4.627, 0.841),
    ("Bulgaria", 21, 4.329, 1.182),
    ("Kazakhstan", 20, 4.320, 1.279),
    ("Greece", 23, 4.292, 1.107),
    ("Colombia", 30, 4.280, 1.120),
    ("Lebanon", 18, 4.235, 0.750),
    ("Uruguay", 18, 4.188, 1.096),
    ("Egypt", 27, 4.187, 1.125),
    ("Slovak Republic", 21, 4.129, 0.693),
    ("Italy", 27, 4.060, 1.035),
    ("Dominican Republic", 27, 3.872, 0.694),
    ("Peru", 22, 3.868, 1.045),
    ("Brazil", 24, 3.847, 1.102),
    ("Morocco", 34, 3.827, 0.887),
    ("Guatemala", 23, 3.799, 1.070),
    ("Saudi Arabia", 24, 3.792, 0.726),
    ("Iran", 36, 3.771, 0.921),
    ("Russia", 19, 3.758, 1.095),
    ("Panama", 21, 3.637, 0.842),
    ("Puerto Rico", 20, 3.578, 0.959),
    ("Sudan", 13, 3.575, 0.942),
    ("Madagascar", 24, 3.501, 0.741),
    ("Croatia", 22, 3.443, 0.942),
    ("Angola", 13, 3.269, 0.979),
    ("Mozambique", 5, 2.541, 0.611),
)


def nes2018_fixture() -> list[CountrySummary]:
    """The 54-country 2018 NECI summaries, with se = sd / sqrt(n)."""
    return [CountrySummary(c, n, m, s) for c, n, m, s in _NES2018]


def nes2018_csv() -> str:
    buf = io.StringIO()
    write_summaries(nes2018_fixture(), buf)
    return buf.getvalue()


# --------------------------------------------------------------------------
# Item catalog
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Indicator:
    id: str
    label: str
    item_ids: tuple[int, ...]

    @property
    def condition(self) -> str:
        return self.id.rstrip("ab")


# (indicator id, label, number of items). Conditions 2, 4 and 7 are split
# first-k/remainder; the split sizes are a default, not taken from GEM.
_DEFAULT_LAYOUT = (
    ("1", "Entrepreneurial Finance", 8),
    ("2a", "Government Policy: support and relevance", 3),
    ("2b", "Government Policy: taxes and bureaucracy", 4),
    ("3", "Government Entrepreneurship Programs", 6),
    ("4a", "Entrepreneurship Education at school stage", 3),
    ("4b", "Entrepreneurship Education at post-school stage", 3),
    ("5", "R&D Transfer", 6),
    ("6", "Commercial and Legal Infrastructure", 5),
    ("7a", "Entry Regulation: market dynamics", 2),
    ("7b", "Entry Regulation: market openness", 4),
    ("8", "Physical Infrastructure", 5),
    ("9", "Cultural and Social Norms", 5),
)
INDICATOR_IDS = tuple(i for i, _, _ in _DEFAULT_LAYOUT)
CONDITION_ITEM_COUNTS = {"1": 8, "2": 7, "3": 6, "4": 6, "5": 6, "6": 5, "7": 6, "8": 5, "9": 5}


@dataclass(frozen=True)
class EfcCatalog:
    """Item-to-indicator map; indicators must partition items 1..54.

    Lookups accept an indicator id (``"2a"``) or a condition id (``"2"``),
    the latter returning the union of its sub-indicators.
    """

    indicators: tuple[Indicator, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "indicators", tuple(self.indicators))
        ids = [ind.id for ind in self.indicators]
        if sorted(ids) != sorted(INDICATOR_IDS):
            raise DataError(f"catalog must define indicators {', '.join(INDICATOR_IDS)}")
        owner: dict[int, str] = {}
        for ind in self.indicators:
            for item in ind.item_ids:
                if not 1 <= item <= N_ITEMS:
                    raise DataError(f"indicator {ind.id}: item {item} outside 1..{N_ITEMS}")
                if item in owner:
                    raise DataError(
                        f"item {item} assigned to both {owner[item]} and {ind.id}"
                    )
                owner[item] = ind.id
        if len(owner) != N_ITEMS:
            unassigned = sorted(set(range(1, N_ITEMS + 1)) - owner.keys())
            raise DataError(f"items not assigned to any indicator: {unassigned}")
        for cond, expected in CONDITION_ITEM_COUNTS.items():
            got = len(self.items_for(cond))
            if got != expected:
                raise DataError(f"condition {cond} has {got} items, expected {expected}")

    def __iter__(self) -> Iterator[Indicator]:
        return iter(self.indicators)

    def conditions(self) -> list[str]:
        return list(dict.fromkeys(ind.condition for ind in self.indicators))

    def items_for(self, indicator_id: str) -> tuple[int, ...]:
        key = str(indicator_id).strip()
        for ind in self.indicators:
            if ind.id == key:
                return ind.item_ids
        members = [ind for ind in self.indicators if ind.condition == key]
        if not members:
            raise DataError(f"unknown indicator id {indicator_id!r}")
        return tuple(sorted(i for ind in members for i in ind.item_ids))

    def label(self, indicator_id: str) -> str:
        key = str(indicator_id).strip()
        for ind in self.indicators:
            if ind.id == key:
                return ind.label
        members = [ind for ind in self.indicators if ind.condition == key]
        if not members:
            raise DataError(f"unknown indicator id {indicator_id!r}")
        return members[0].label.split(":")[0]


def default_catalog() -> EfcCatalog:
    """Contiguous item blocks in indicator order (items 1-8 finance, ...)."""
    indicators = []
    start = 1
    for ind_id, label, count in _DEFAULT_LAYOUT:
        indicators.append(Indicator(ind_id, label, tuple(range(start, start + count))))
        start += count
    return EfcCatalog(tuple(indicators))


def load_catalog(source: Source, base: EfcCatalog | None = None) -> EfcCatalog:
    """Read a ``indicator_id,item_index`` override file.

    Every item must be listed exactly once; labels are taken from ``base``
    (the default catalog when omitted).
    """
    base = base or default_catalog()
    header, rows = read_records(source)
    if header[:2] != ["indicator_id", "item_index"]:
        raise DataError("catalog header must be 'indicator_id,item_index'")
    assigned: dict[str, list[int]] = {i: [] for i in INDICATOR_IDS}
    for line, row in rows:
        if len(row) < 2:
            raise DataError(f"line {line}: expected 2 fields, got {len(row)}")
        ind = row[0].strip()
        if ind not in assigned:
            raise DataError(f"line {line}, column indicator_id: unknown indicator {ind!r}")
        assigned[ind].append(_field_int(row[1], line, "item_index"))
    labels: Mapping[str, str] = {ind.id: ind.label for ind in base}
    return EfcCatalog(
        tuple(Indicator(i, labels[i], tuple(sorted(assigned[i]))) for i in INDICATOR_IDS)
    )
