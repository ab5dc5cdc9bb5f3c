"""Composite scores: expert-level NECI / EFC means, country summaries, ranking."""
from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from rankcert.errors import DataError
from rankcert.nes_data import (
    N_ITEMS,
    CountrySummary,
    EfcCatalog,
    ExpertResponse,
    SurveyDataset,
)


@dataclass(frozen=True)
class CompletenessPolicy:
    """When a (partially answered) block of items yields a score.

    ``require_all`` drops the expert if any item is missing (listwise);
    ``min_fraction`` needs at least ``fraction`` of the items answered.
    """

    mode: str = "require_all"
    fraction: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in ("require_all", "min_fraction"):
            raise ValueError(f"unknown completeness mode {self.mode!r}")
        if not 0 < self.fraction <= 1:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")

    @classmethod
    def require_all(cls) -> CompletenessPolicy:
        return cls("require_all", 1.0)

    @classmethod
    def min_fraction(cls, fraction: float) -> CompletenessPolicy:
        return cls("min_fraction", fraction)

    def satisfied(self, n_present: int, n_total: int) -> bool:
        if n_present == 0:
            return False
        if self.mode == "require_all":
            return n_present == n_total
        # tolerance so that e.g. 0.4 * 5 counts 2 answers as enough
        return n_present >= self.fraction * n_total - 1e-9


REQUIRE_ALL = CompletenessPolicy()


@dataclass(frozen=True)
class RankedCountry:
    country: str
    rank: int
    mean: float


def _block_mean(values: Sequence[int | None], policy: CompletenessPolicy) -> float | None:
    present = [v for v in values if v is not None]
    if not policy.satisfied(len(present), len(values)):
        return None
    return math.fsum(present) / len(present)


def expert_index(
    r: ExpertResponse,
    policy: CompletenessPolicy = REQUIRE_ALL,
    item_ids: Iterable[int] | None = None,
) -> float | None:
    """Mean of an expert's answers over all items (or ``item_ids``).

    Returns ``None`` when the completeness policy is not met.
    """
    return _block_mean(r.values(item_ids), policy)


def efc_score(
    r: ExpertResponse,
    indicator_id: str,
    catalog: EfcCatalog,
    policy: CompletenessPolicy = REQUIRE_ALL,
) -> float | None:
    """Mean over the items of one indicator or condition of ``catalog``."""
    return _block_mean(r.values(catalog.items_for(indicator_id)), policy)


def remap_scale(v):
    """Map a 9-point score onto the 5-point scale, ``1 + (v - 1) / 2``.

    Works elementwise on arrays. Values outside [1, 9] raise ``DataError``.
    """
    arr = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 1) or np.any(arr > 9):
        raise DataError(f"score outside the 9-point range [1, 9]: {v!r}")
    out = 1.0 + (arr - 1.0) / 2.0
    return float(out) if out.ndim == 0 else out


def expert_scores(
    ds: SurveyDataset,
    policy: CompletenessPolicy = REQUIRE_ALL,
    item_ids: Iterable[int] | None = None,
) -> dict[str, list[float]]:
    """Scorable expert indices grouped by country (first-appearance order)."""
    ids = None if item_ids is None else tuple(item_ids)
    out: dict[str, list[float]] = {}
    for r in ds:
        score = expert_index(r, policy, ids)
        if score is not None:
            out.setdefault(r.country, []).append(score)
    return out


def country_summaries(
    ds: SurveyDataset,
    policy: CompletenessPolicy = REQUIRE_ALL,
    item_ids: Iterable[int] | None = None,
) -> list[CountrySummary]:
    """One :class:`CountrySummary` per country with at least one scorable expert.

    ``n`` counts scorable experts only. Single-expert countries get
    ``sd = se = 0`` and ``degenerate=True``.
    """
    if len(ds) == 0:
        raise DataError("dataset is empty")
    scores = expert_scores(ds, policy, item_ids)
    if not scores:
        raise DataError("no expert satisfies the completeness policy")
    return [CountrySummary.from_scores(c, v) for c, v in scores.items()]


def efc_summaries(
    ds: SurveyDataset,
    catalog: EfcCatalog,
    policy: CompletenessPolicy = REQUIRE_ALL,
) -> dict[str, list[CountrySummary]]:
    """Country summaries for every indicator of ``catalog``; empty lists are dropped."""
    out = {}
    for ind in catalog:
        scores = expert_scores(ds, policy, ind.item_ids)
        if scores:
            out[ind.id] = [CountrySummary.from_scores(c, v) for c, v in scores.items()]
    return out


def point_ranking(summaries: Sequence[CountrySummary]) -> list[RankedCountry]:
    """Rank by descending mean; exact ties go to the alphabetically first label."""
    if not summaries:
        raise DataError("cannot rank an empty list of summaries")
    ordered = sorted(summaries, key=lambda s: (-s.mean, s.country))
    return [RankedCountry(s.country, i, s.mean) for i, s in enumerate(ordered, start=1)]


__all__ = [
    "N_ITEMS",
    "REQUIRE_ALL",
    "CompletenessPolicy",
    "RankedCountry",
    "country_summaries",
    "efc_score",
    "efc_summaries",
    "expert_index",
    "expert_scores",
    "point_ranking",
    "remap_scale",
]
