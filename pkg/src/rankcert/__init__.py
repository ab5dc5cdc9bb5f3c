"""Composite indices, reliability statistics and rank confidence sets for
expert-survey data."""

from rankcert.errors import DataError, DegenerateError, RankcertError
from rankcert.index import (
    CompletenessPolicy,
    RankedCountry,
    country_summaries,
    efc_score,
    expert_index,
    point_ranking,
    remap_scale,
)
from rankcert.nes_data import (
    CountrySummary,
    EfcCatalog,
    ExpertResponse,
    Indicator,
    SurveyDataset,
    default_catalog,
    parse_responses,
    parse_summaries,
    nes2018_fixture,
)
from rankcert.rank_inference import (
    BootstrapConfig,
    MeanEstimate,
    PairwiseDiff,
    RankConfidenceSet,
    bootstrap_critical_values,
    pairwise_differences,
    project_sample_size,
    rank_confidence_sets,
)
from rankcert.reliability import (
    IccResult,
    TypeEffects,
    cronbach_alpha,
    duplication_check,
    expert_type_effects,
    icc_oneway,
)
from rankcert.trend import (
    TrendPoint,
    TrendSeries,
    consecutive_year_test,
    cross_index_correlation,
    deviation_test,
    yearly_series,
)

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "CompletenessPolicy",
    "CountrySummary",
    "DataError",
    "DegenerateError",
    "EfcCatalog",
    "ExpertResponse",
    "IccResult",
    "Indicator",
    "MeanEstimate",
    "PairwiseDiff",
    "RankConfidenceSet",
    "RankcertError",
    "RankedCountry",
    "SurveyDataset",
    "TrendPoint",
    "TrendSeries",
    "TypeEffects",
    "bootstrap_critical_values",
    "consecutive_year_test",
    "country_summaries",
    "cronbach_alpha",
    "cross_index_correlation",
    "default_catalog",
    "deviation_test",
    "duplication_check",
    "efc_score",
    "expert_index",
    "expert_type_effects",
    "icc_oneway",
    "pairwise_differences",
    "parse_responses",
    "parse_summaries",
    "point_ranking",
    "project_sample_size",
    "rank_confidence_sets",
    "remap_scale",
    "nes2018_fixture",
    "yearly_series",
]
