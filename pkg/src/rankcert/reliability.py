"""Internal consistency and interrater reliability of expert ratings."""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from rankcert._special import student_t_two_sided
from rankcert.errors import DataError, DegenerateError
from rankcert.index import REQUIRE_ALL, CompletenessPolicy, expert_index
from rankcert.nes_data import N_ITEMS, SurveyDataset


def item_matrix(ds: SurveyDataset, item_ids: Iterable[int] | None = None) -> np.ndarray:
    """Complete-case expert x item matrix (listwise deletion)."""
    ids = tuple(range(1, N_ITEMS + 1)) if item_ids is None else tuple(item_ids)
    rows = []
    for r in ds:
        values = r.values(ids)
        if all(v is not None for v in values):
            rows.append(values)
    return np.asarray(rows, dtype=float).reshape(len(rows), len(ids))


def cronbach_alpha(m) -> float:
    """Cronbach's alpha of an experts x items matrix.

    ``k / (k - 1) * (1 - sum(item variances) / variance(row sums))`` with
    sample (n - 1) variances. The value is at most 1 and may be negative.

    Raises
    ------
    DataError
        Fewer than two rows or columns, or missing values.
    DegenerateError
        The row sums have zero variance.
    """
    x = np.asarray(m, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise DataError(f"need at least 2 rows and 2 items, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("item matrix contains missing or non-finite values")
    k = x.shape[1]
    total_var = x.sum(axis=1).var(ddof=1)
    if not total_var > 0:
        raise DegenerateError("degenerate matrix: total score variance is zero")
    return k / (k - 1) * (1.0 - x.var(axis=0, ddof=1).sum() / total_var)


@dataclass(frozen=True)
class IccResult:
    """One-way random-effects ANOVA decomposition and ICC(1).

    ``icc`` is reported raw; ``truncated`` flags a negative estimate that
    would conventionally be shown as 0.
    """

    icc: float
    ms_between: float
    ms_within: float
    k0: float
    sigma2_between: float
    groups: int
    total_n: int

    @property
    def truncated(self) -> bool:
        return self.icc < 0


def icc_oneway(groups: Sequence[Sequence[float]]) -> IccResult:
    """ICC(1) for unbalanced groups.

    Parameters
    ----------
    groups : sequence of 1-d arrays
        Ratings of each rated object (one group per country).

    Notes
    -----
    With ``G`` groups of sizes ``n_i`` and ``N`` ratings in total::

        MSB = SSB / (G - 1),  MSW = SSW / (N - G)
        k0  = (N - sum(n_i**2) / N) / (G - 1)
        s2b = (MSB - MSW) / k0
        icc = s2b / (s2b + MSW)
    """
    arrays = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(arrays) < 2:
        raise DataError(f"need at least 2 groups, got {len(arrays)}")
    for i, a in enumerate(arrays):
        if a.size == 0:
            raise DataError(f"group {i} is empty")
        if not np.all(np.isfinite(a)):
            raise DataError(f"group {i} contains non-finite values")
    sizes = np.array([a.size for a in arrays], dtype=float)
    n_groups = len(arrays)
    total_n = int(sizes.sum())
    if total_n <= n_groups:
        raise DataError("need more observations than groups")
    pooled = np.concatenate(arrays)
    if np.ptp(pooled) == 0:
        raise DegenerateError("no variance: all values are identical")

    grand = pooled.mean()
    means = np.array([a.mean() for a in arrays])
    ssb = float(np.sum(sizes * (means - grand) ** 2))
    ssw = float(sum(np.sum((a - m) ** 2) for a, m in zip(arrays, means)))
    msb = ssb / (n_groups - 1)
    msw = ssw / (total_n - n_groups)
    k0 = (total_n - np.sum(sizes**2) / total_n) / (n_groups - 1)
    s2b = (msb - msw) / k0
    return IccResult(
        icc=float(s2b / (s2b + msw)),
        ms_between=msb,
        ms_within=msw,
        k0=float(k0),
        sigma2_between=float(s2b),
        groups=n_groups,
        total_n=total_n,
    )


def duplication_check(groups: Sequence[Sequence[float]], factor: int = 10) -> IccResult:
    """ICC after replicating every observation ``factor`` times."""
    if int(factor) != factor or factor < 2:
        raise DataError(f"duplication factor must be an integer >= 2, got {factor}")
    return icc_oneway([np.repeat(np.asarray(g, dtype=float), int(factor)) for g in groups])


@dataclass(frozen=True)
class TypeEffect:
    delta: float
    se: float
    p_value: float
    n: int

    @property
    def significant(self) -> bool:
        return self.p_value < 0.05


@dataclass(frozen=True)
class TypeEffects:
    """Expert-type deviations from the country-adjusted grand mean."""

    effects: dict[str, TypeEffect]
    residual_df: int

    def __getitem__(self, expert_type: str) -> TypeEffect:
        return self.effects[expert_type]

    def __iter__(self):
        return iter(self.effects)

    def __len__(self) -> int:
        return len(self.effects)


def _demean(values: np.ndarray, codes: np.ndarray, n_codes: int) -> np.ndarray:
    counts = np.bincount(codes, minlength=n_codes).astype(float)
    if values.ndim == 1:
        sums = np.bincount(codes, weights=values, minlength=n_codes)
        return values - (sums / counts)[codes]
    out = np.empty_like(values)
    for j in range(values.shape[1]):
        sums = np.bincount(codes, weights=values[:, j], minlength=n_codes)
        out[:, j] = values[:, j] - (sums / counts)[codes]
    return out


def expert_type_effects(
    ds: SurveyDataset,
    policy: CompletenessPolicy = REQUIRE_ALL,
    item_ids: Iterable[int] | None = None,
) -> TypeEffects:
    """Regress expert scores on expert type with country fixed effects.

    Types enter with weighted effects coding: each ``delta`` is the type's
    deviation from the frequency-weighted average type, so
    ``sum(n_t * delta_t) == 0``. Country effects are absorbed by demeaning
    within country. Standard errors use the homoskedastic residual variance
    with ``N - countries - (types - 1)`` degrees of freedom; significance is a
    two-sided t-test at 5%.

    Raises
    ------
    DegenerateError
        An expert type does not vary within any country, so its effect
        cannot be separated from the country effects.
    """
    ids = None if item_ids is None else tuple(item_ids)
    y_list, countries, types = [], [], []
    for r in ds:
        score = expert_index(r, policy, ids)
        if score is not None:
            y_list.append(score)
            countries.append(r.country)
            types.append(r.expert_type)
    if not y_list:
        raise DataError("no expert satisfies the completeness policy")

    type_names = sorted(set(types))
    counts = {t: types.count(t) for t in type_names}
    if len(type_names) == 1:
        only = type_names[0]
        return TypeEffects({only: TypeEffect(0.0, 0.0, 1.0, counts[only])}, 0)

    y = np.asarray(y_list)
    country_names = sorted(set(countries))
    c_code = np.array([country_names.index(c) for c in countries])
    t_code = np.array([type_names.index(t) for t in types])
    n_obs, n_types, n_countries = len(y), len(type_names), len(country_names)

    dummies = np.zeros((n_obs, n_types))
    dummies[np.arange(n_obs), t_code] = 1.0
    x_all = _demean(dummies, c_code, n_countries)
    for j, name in enumerate(type_names):
        if np.max(np.abs(x_all[:, j])) < 1e-12:
            raise DegenerateError(
                f"expert type {name!r} is collinear with the country fixed effects"
            )
    # last type is the omitted reference; the constraint is imposed afterwards
    x = x_all[:, :-1]
    yd = _demean(y, c_code, n_countries)
    if np.linalg.matrix_rank(x) < n_types - 1:
        raise DegenerateError("expert types are collinear with the country fixed effects")
    gamma_red, *_ = np.linalg.lstsq(x, yd, rcond=None)
    resid = yd - x @ gamma_red
    df = n_obs - n_countries - (n_types - 1)

    weights = np.array([counts[t] for t in type_names], dtype=float) / n_obs
    gamma = np.append(gamma_red, 0.0)
    contrast = np.eye(n_types) - np.outer(np.ones(n_types), weights)
    delta = contrast @ gamma

    if df > 0:
        sigma2 = float(resid @ resid) / df
        cov_red = sigma2 * np.linalg.inv(x.T @ x)
        cov = np.zeros((n_types, n_types))
        cov[:-1, :-1] = cov_red
        se = np.sqrt(np.clip(np.diag(contrast @ cov @ contrast.T), 0.0, None))
    else:
        se = np.full(n_types, np.nan)

    effects = {}
    for j, name in enumerate(type_names):
        d, s = float(delta[j]), float(se[j])
        if np.isnan(s):
            p = float("nan")
        elif s == 0.0:
            p = 0.0 if abs(d) > 1e-12 else 1.0
        else:
            p = student_t_two_sided(d / s, df)
        effects[name] = TypeEffect(d, s, p, counts[name])
    return TypeEffects(effects, df)
