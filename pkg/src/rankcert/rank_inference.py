"""Simultaneous confidence sets for ranks of estimated means.

For countries ``j, k`` with estimated means ``m_j, m_k`` and standard
errors ``s_j, s_k`` the pairwise difference ``m_j - m_k`` has standard error
``s_jk = sqrt(s_j**2 + s_k**2)``. A bootstrap distribution of the
studentized max statistic

    max |(d*_jk - d_jk)| / s_jk

calibrates a critical value ``c`` so that all intervals ``d_jk +/- c * s_jk``
hold jointly with probability about ``1 - alpha``. Country ``j``'s rank set
is then ``[1 + #{k: interval below 0}, p - #{k: interval above 0}]``.

By default the max runs over all pairs at once, which yields rank sets that
are simultaneous across every country. ``scope="per_country"`` instead takes
the max over the pairs involving one focal country, giving narrower sets
that are simultaneous only within that country's row.

Replicate ``r`` draws from its own generator seeded by ``(seed, r)`` and
draws are made in sorted-id order, so results depend only on the inputs and
the seed: not on input order, chunking, or the number of worker threads.
"""
from __future__ import annotations

import csv
import math
import os
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO

import numpy as np

from rankcert.errors import DataError, DegenerateError
from rankcert.index import REQUIRE_ALL, CompletenessPolicy, expert_scores
from rankcert.nes_data import CountrySummary, Source, SurveyDataset, read_records

MODES = ("parametric", "resample")
SCOPES = ("joint", "per_country")
THREADS_ENV = "RANKCERT_THREADS"
_CHUNK = 128


@dataclass(frozen=True)
class MeanEstimate:
    id: str
    mean: float
    se: float
    n: int | None = None

    def __post_init__(self) -> None:
        if not self.se >= 0:
            raise DataError(f"{self.id}: se must be >= 0, got {self.se}")
        if not math.isfinite(self.mean):
            raise DataError(f"{self.id}: mean must be finite")

    @classmethod
    def from_summary(cls, s: CountrySummary) -> MeanEstimate:
        return cls(s.country, s.mean, s.se, s.n)


@dataclass(frozen=True)
class PairwiseDiff:
    id_a: str
    id_b: str
    diff: float
    se_diff: float

    def reversed(self) -> PairwiseDiff:
        return PairwiseDiff(self.id_b, self.id_a, -self.diff, self.se_diff)


@dataclass(frozen=True)
class BootstrapConfig:
    """Bootstrap settings.

    ``threads=None`` reads ``RANKCERT_THREADS`` and falls back to the CPU
    count. The thread count never changes results.
    """

    replicates: int = 2000
    alpha: float = 0.05
    seed: int = 0
    mode: str = "parametric"
    scope: str = "joint"
    threads: int | None = None

    def __post_init__(self) -> None:
        if int(self.replicates) != self.replicates or self.replicates < 100:
            raise DataError(f"replicates must be an integer >= 100, got {self.replicates}")
        if not 0 < self.alpha < 0.5:
            raise DataError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise DataError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.mode not in MODES:
            raise DataError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.scope not in SCOPES:
            raise DataError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        if self.threads is not None and self.threads < 1:
            raise DataError(f"threads must be >= 1, got {self.threads}")


@dataclass(frozen=True)
class RankConfidenceSet:
    id: str
    point_rank: int
    lower: int
    upper: int

    @property
    def width(self) -> int:
        return self.upper - self.lower

    def __contains__(self, rank: int) -> bool:
        return self.lower <= rank <= self.upper


def _check_ids(estimates: Sequence[MeanEstimate]) -> None:
    seen: set[str] = set()
    for e in estimates:
        if e.id in seen:
            raise DataError(f"duplicate id {e.id!r}")
        seen.add(e.id)


def pairwise_differences(estimates: Sequence[MeanEstimate]) -> list[PairwiseDiff]:
    """All unordered pairs ``(a, b)`` with ``a`` before ``b`` in input order."""
    if len(estimates) < 2:
        raise DataError("need at least 2 estimates")
    _check_ids(estimates)
    out = []
    for i, a in enumerate(estimates):
        for b in estimates[i + 1:]:
            out.append(PairwiseDiff(a.id, b.id, a.mean - b.mean, math.hypot(a.se, b.se)))
    return out


def resolve_threads(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV, "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DataError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _replicate_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r,))))


def _as_samples(samples, ids: Sequence[str]) -> list[np.ndarray]:
    if samples is None:
        raise DataError("resample mode requires expert-level data")
    if isinstance(samples, SurveyDataset):
        samples = expert_scores(samples, REQUIRE_ALL)
    out = []
    for i in ids:
        if i not in samples:
            raise DataError(f"no expert-level data for {i!r}")
        a = np.asarray(samples[i], dtype=float).ravel()
        if a.size == 0:
            raise DataError(f"no expert-level data for {i!r}")
        out.append(a)
    return out


def _sample_se(a: np.ndarray) -> float:
    return float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0


class _MaxStatistic:
    """Per-replicate, per-country max studentized deviation (canonical order)."""

    def __init__(self, means, ses, cfg: BootstrapConfig, samples=None):
        self.means = np.asarray(means, dtype=float)
        self.ses = np.asarray(ses, dtype=float)
        self.cfg = cfg
        self.samples = samples
        self.p = len(self.means)
        self.se_pair = np.sqrt(self.ses[:, None] ** 2 + self.ses[None, :] ** 2)
        self.diag = np.eye(self.p, dtype=bool)

    def _draw(self, rng: np.random.Generator):
        if self.cfg.mode == "parametric":
            return rng.standard_normal(self.p) * self.ses, None
        dev = np.empty(self.p)
        se = np.empty(self.p)
        for k, a in enumerate(self.samples):
            star = a[rng.integers(0, a.size, a.size)]
            dev[k] = star.mean() - self.means[k]
            se[k] = _sample_se(star)
        return dev, se

    def chunk(self, start: int, stop: int) -> np.ndarray:
        b = stop - start
        dev = np.empty((b, self.p))
        se_star = np.empty((b, self.p)) if self.cfg.mode == "resample" else None
        for i, r in enumerate(range(start, stop)):
            d, s = self._draw(_replicate_rng(self.cfg.seed, r))
            dev[i] = d
            if se_star is not None:
                se_star[i] = s
        num = np.abs(dev[:, :, None] - dev[:, None, :])
        if se_star is None:
            den = np.broadcast_to(self.se_pair, num.shape)
        else:
            den = np.sqrt(se_star[:, :, None] ** 2 + se_star[:, None, :] ** 2)
            # a replicate with two constant resamples falls back to the plug-in se
            den = np.where(den > 0, den, self.se_pair[None])
        with np.errstate(invalid="ignore", divide="ignore"):
            stat = num / den
        stat[:, self.diag] = -np.inf
        return stat.max(axis=2)

    def run(self, threads: int) -> np.ndarray:
        bounds = [
            (s, min(s + _CHUNK, self.cfg.replicates))
            for s in range(0, self.cfg.replicates, _CHUNK)
        ]
        if threads <= 1 or len(bounds) == 1:
            parts = [self.chunk(a, b) for a, b in bounds]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda ab: self.chunk(*ab), bounds))
        return np.vstack(parts)


def _prepare(estimates: Sequence[MeanEstimate], cfg: BootstrapConfig, samples):
    if len(estimates) < 2:
        raise DataError("need at least 2 estimates")
    _check_ids(estimates)
    order = sorted(range(len(estimates)), key=lambda i: estimates[i].id)
    ids = [estimates[i].id for i in order]
    means = np.array([estimates[i].mean for i in order])
    ses = np.array([estimates[i].se for i in order])
    arrays = None
    if cfg.mode == "resample":
        arrays = _as_samples(samples, ids)
        by_id = {e.id: e for e in estimates}
        for i, a in zip(ids, arrays):
            e = by_id[i]
            if abs(a.mean() - e.mean) > 1e-9 or abs(_sample_se(a) - e.se) > 1e-9:
                raise DataError(f"estimate for {i!r} does not match its expert-level data")
    se_pair = np.sqrt(ses[:, None] ** 2 + ses[None, :] ** 2)
    zero = np.argwhere((se_pair == 0) & ~np.eye(len(ids), dtype=bool))
    if zero.size:
        a, b = zero[0]
        raise DegenerateError(f"zero-variance pair: {ids[a]!r} and {ids[b]!r} both have se = 0")
    return order, ids, means, ses, arrays


def max_statistic_draws(
    estimates: Sequence[MeanEstimate],
    cfg: BootstrapConfig,
    samples=None,
) -> np.ndarray:
    """Bootstrap draws of each country's max studentized deviation.

    Returns an array of shape ``(replicates, p)`` whose columns follow the
    input order of ``estimates``.
    """
    order, _, means, ses, arrays = _prepare(estimates, cfg, samples)
    draws = _MaxStatistic(means, ses, cfg, arrays).run(resolve_threads(cfg.threads))
    out = np.empty_like(draws)
    out[:, order] = draws
    return out


def _upper_quantile(draws: np.ndarray, alpha: float) -> np.ndarray:
    # order statistic ceil((1 - alpha) * B)
    return np.quantile(draws, 1.0 - alpha, axis=0, method="inverted_cdf")


def bootstrap_critical_values(
    estimates: Sequence[MeanEstimate],
    cfg: BootstrapConfig,
    samples: Mapping[str, Sequence[float]] | SurveyDataset | None = None,
) -> np.ndarray:
    """Critical value ``c_j`` for every country, in input order.

    Parameters
    ----------
    estimates : sequence of MeanEstimate
        Point estimates with standard errors; ids must be unique.
    cfg : BootstrapConfig
        ``mode="parametric"`` redraws each mean from ``Normal(mean, se**2)``
        and studentizes by the plug-in pair se. ``mode="resample"`` resamples
        every country's experts with replacement (``samples`` required) and
        studentizes by the replicate se.
    samples : mapping or SurveyDataset, optional
        Expert-level scores per id, for resample mode.

    Returns
    -------
    ndarray of shape (p,)
        Empirical ``1 - alpha`` quantiles. Under the default joint scope all
        entries are equal.

    Raises
    ------
    DegenerateError
        Two countries both have se = 0, so their difference cannot be
        studentized.
    """
    draws = max_statistic_draws(estimates, cfg, samples)
    if cfg.scope == "joint":
        c = float(_upper_quantile(draws.max(axis=1), cfg.alpha))
        return np.full(draws.shape[1], c)
    return _upper_quantile(draws, cfg.alpha)


def _point_ranks(estimates: Sequence[MeanEstimate]) -> dict[str, int]:
    ordered = sorted(estimates, key=lambda e: (-e.mean, e.id))
    return {e.id: i for i, e in enumerate(ordered, start=1)}


def rank_sets_from_critical_values(
    estimates: Sequence[MeanEstimate], critical: Sequence[float]
) -> list[RankConfidenceSet]:
    """Turn critical values into rank sets (input order).

    An interval touching 0 exactly does not separate the pair.
    """
    means = np.array([e.mean for e in estimates])
    ses = np.array([e.se for e in estimates])
    c = np.asarray(critical, dtype=float)[:, None]
    diff = means[:, None] - means[None, :]
    half = c * np.sqrt(ses[:, None] ** 2 + ses[None, :] ** 2)
    off = ~np.eye(len(estimates), dtype=bool)
    above_j = ((diff + half) < 0) & off
    below_j = ((diff - half) > 0) & off
    p = len(estimates)
    points = _point_ranks(estimates)
    out = []
    for j, e in enumerate(estimates):
        point = points[e.id]
        lower = min(1 + int(above_j[j].sum()), point)
        upper = max(p - int(below_j[j].sum()), point)
        out.append(RankConfidenceSet(e.id, point, lower, upper))
    return out


def rank_confidence_sets(
    estimates: Sequence[MeanEstimate],
    cfg: BootstrapConfig,
    samples: Mapping[str, Sequence[float]] | SurveyDataset | None = None,
) -> list[RankConfidenceSet]:
    """Simultaneous rank confidence sets at level ``1 - cfg.alpha``.

    Output follows the input order. Point ranks break exact ties by id.
    """
    critical = bootstrap_critical_values(estimates, cfg, samples)
    return rank_sets_from_critical_values(estimates, critical)


def estimates_from_summaries(summaries: Sequence[CountrySummary]) -> list[MeanEstimate]:
    return [MeanEstimate.from_summary(s) for s in summaries]


def estimates_from_samples(samples: Mapping[str, Sequence[float]]) -> list[MeanEstimate]:
    out = []
    for key, values in samples.items():
        a = np.asarray(values, dtype=float)
        out.append(MeanEstimate(key, float(a.mean()), _sample_se(a), int(a.size)))
    return out


def estimates_from_dataset(
    ds: SurveyDataset, policy: CompletenessPolicy = REQUIRE_ALL
) -> tuple[list[MeanEstimate], dict[str, list[float]]]:
    scores = expert_scores(ds, policy)
    if not scores:
        raise DataError("no expert satisfies the completeness policy")
    return estimates_from_samples(scores), scores


def projected_estimates(
    summaries: Sequence[CountrySummary], n_experts: int
) -> list[MeanEstimate]:
    """Estimates with each se replaced by ``sd / sqrt(n_experts)``."""
    if int(n_experts) != n_experts or n_experts < 2:
        raise DataError(f"n_experts must be an integer >= 2, got {n_experts}")
    out = []
    for s in summaries:
        if s.sd is None or not math.isfinite(s.sd):
            raise DataError(f"{s.country}: standard deviation is missing")
        out.append(MeanEstimate(s.country, s.mean, s.sd / math.sqrt(n_experts), int(n_experts)))
    return out


def project_sample_size(
    summaries: Sequence[CountrySummary], n_experts: int, cfg: BootstrapConfig
) -> list[RankConfidenceSet]:
    """Rank sets if every country had ``n_experts`` raters with its observed SD.

    The bootstrap always runs in parametric mode.
    """
    parametric = BootstrapConfig(
        cfg.replicates, cfg.alpha, cfg.seed, "parametric", cfg.scope, cfg.threads
    )
    return rank_confidence_sets(projected_estimates(summaries, n_experts), parametric)


RANK_COLUMNS = ("country", "point_rank", "lower", "upper", "mean", "se")


def write_rank_sets(
    sets: Sequence[RankConfidenceSet],
    estimates: Sequence[MeanEstimate],
    stream: IO[str],
) -> None:
    """Write ``country,point_rank,lower,upper,mean,se`` rows sorted by point rank."""
    by_id = {e.id: e for e in estimates}
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(RANK_COLUMNS)
    for s in sorted(sets, key=lambda s: s.point_rank):
        e = by_id[s.id]
        writer.writerow([s.id, s.point_rank, s.lower, s.upper, repr(float(e.mean)), repr(float(e.se))])


def parse_rank_sets(source: Source) -> tuple[list[RankConfidenceSet], list[MeanEstimate]]:
    header, rows = read_records(source)
    missing = [c for c in RANK_COLUMNS if c not in header]
    if missing:
        raise DataError(f"rank header is missing column(s): {', '.join(missing)}")
    pos = {name: i for i, name in enumerate(header)}
    sets, estimates = [], []
    for line, row in rows:
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            cid = row[pos["country"]]
            point, lower, upper = (int(row[pos[k]]) for k in ("point_rank", "lower", "upper"))
            mean, se = float(row[pos["mean"]]), float(row[pos["se"]])
        except ValueError as exc:
            raise DataError(f"line {line}: {exc}") from None
        if not 1 <= lower <= point <= upper:
            raise DataError(f"line {line}: inconsistent rank bounds {lower}, {point}, {upper}")
        sets.append(RankConfidenceSet(cid, point, lower, upper))
        estimates.append(MeanEstimate(cid, mean, se))
    return sets, estimates
