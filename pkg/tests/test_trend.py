import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import constant_expert_dataset, response
from rankcert.errors import DataError, DegenerateError
from rankcert.nes_data import SurveyDataset
from rankcert.trend import (
    TrendPoint,
    TrendSeries,
    consecutive_year_test,
    cross_index_correlation,
    deviation_test,
    parse_scores,
    parse_trend,
    write_trend,
    yearly_series,
)


def series(points, center):
    pts = tuple(TrendPoint("X", 2000 + i, 10, m, s) for i, (m, s) in enumerate(points))
    return TrendSeries("X", pts, center)


def panel(scores_by_year, country="BR", scale_max=9):
    rows = [response(country, year, fill=s) for year, scores in scores_by_year.items() for s in scores]
    return SurveyDataset(tuple(rows), scale_max)


def test_single_year_hand_case():
    s = yearly_series(constant_expert_dataset({"BR": [3, 5]}), "BR")
    (p,) = s.points
    assert (p.n, p.mean) == (2, 4.0)
    assert p.se == pytest.approx(1.0, abs=1e-12)
    assert (p.ci_low, p.ci_high) == pytest.approx((2.04, 5.96), abs=1e-12)
    assert s.country_mean == 4.0


def test_identical_years_equal_country_mean():
    s = yearly_series(panel({y: [3, 5, 6] for y in range(2007, 2012)}), "BR")
    assert all(p.mean == pytest.approx(s.country_mean, abs=1e-12) for p in s.points)
    assert not any(deviation_test(s)) and not any(consecutive_year_test(s))


def test_complete_panel_twelve_points():
    rng = np.random.default_rng(3)
    rows = []
    for c in ["BR", "CN", "DE", "GR", "KR", "US", "ZA"]:
        for y in range(2007, 2019):
            rows += [response(c, y, fill=int(v)) for v in rng.integers(2, 8, 6)]
    ds = SurveyDataset(tuple(rows), 9)
    counts = [len(yearly_series(ds, c).points) for c in ds.countries()]
    assert counts == [12] * 7 and sum(counts) == 84


def test_country_mean_pools_experts_not_years():
    s = yearly_series(panel({2010: [2], 2011: [6, 6, 6]}), "BR")
    assert s.country_mean == 5.0


def test_unknown_country():
    with pytest.raises(DataError, match="unknown country"):
        yearly_series(panel({2010: [3, 4]}), "XX")


def test_mixed_scale_remap():
    old = panel({2012: [3, 5]}, scale_max=5)
    new = panel({2016: [9, 5]}, scale_max=9)
    s = yearly_series([old, new], "BR")
    assert s.scale_max == 5
    assert [p.mean for p in s.points] == [4.0, 4.0]
    assert s.country_mean == 4.0


def test_years_must_increase():
    with pytest.raises(DataError):
        TrendSeries("X", (TrendPoint("X", 2001, 1, 1.0, 0.0), TrendPoint("X", 2000, 1, 1.0, 0.0)), 1.0)


@pytest.mark.parametrize("mean, se, center, flagged", [(5.0, 0.1, 6.0, True), (5.0, 1.0, 6.0, False)])
def test_deviation_examples(mean, se, center, flagged):
    assert deviation_test(series([(mean, se)], center)) == [flagged]


def test_deviation_boundary_not_flagged():
    # center exactly on the interval edge stays inside
    assert deviation_test(series([(5.0, 0.5)], 5.0 + 1.96 * 0.5)) == [False]


def test_deviation_empty():
    with pytest.raises(DataError):
        deviation_test(TrendSeries("X", (), 0.0))


@pytest.mark.parametrize(
    "a, b, flagged", [((3.0, 0.1), (4.0, 0.1), True), ((4.0, 0.2), (4.0, 0.2), False), ((4.0, 0.2), (4.3, 0.2), False)]
)
def test_consecutive_examples(a, b, flagged):
    assert consecutive_year_test(series([a, b], 4.0)) == [flagged]


def test_consecutive_matches_direct_z():
    rng = np.random.default_rng(17)
    means = rng.uniform(2, 6, 1001)
    ses = rng.uniform(0.01, 0.5, 1001)
    flags = consecutive_year_test(series(list(zip(means, ses)), 4.0))
    z = np.abs(np.diff(means)) / np.sqrt(ses[:-1] ** 2 + ses[1:] ** 2)
    assert flags == list(z > 1.96)


def test_yearly_series_step_flags_align():
    s = yearly_series(panel({2010: [2, 3, 2, 3], 2011: [7, 8, 7, 8], 2012: [7, 8, 8, 7]}), "BR")
    assert [p.differs_from_previous_year for p in s.points] == [False, True, False]
    assert consecutive_year_test(s) == [True, False]


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.tuples(st.floats(1, 9), st.floats(0.01, 2)), min_size=2, max_size=10),
    st.floats(1, 9),
    st.sampled_from([-2.0, 0.5, 3.25]),
)
def test_flags_shift_invariant(points, center, c):
    base = series(points, center)
    moved = series([(m + c, s) for m, s in points], center + c)
    # compare away from the knife edge where rounding of the shift matters
    for (m, s) in points:
        if abs(abs(center - m) - 1.96 * s) < 1e-6:
            return
    for (m0, s0), (m1, s1) in zip(points, points[1:]):
        if abs(abs(m1 - m0) - 1.96 * math.hypot(s0, s1)) < 1e-6:
            return
    assert deviation_test(base) == deviation_test(moved)
    assert consecutive_year_test(base) == consecutive_year_test(moved)


# --- correlation ----------------------------------------------------------

def test_correlation_identity():
    r, p = cross_index_correlation([1.0, 4.0, 2.0, 7.0], [1.0, 4.0, 2.0, 7.0])
    assert r == pytest.approx(1.0) and p == 0.0


def test_correlation_hand_case_vs_scipy():
    stats = pytest.importorskip("scipy.stats")
    r, p = cross_index_correlation([1, 2, 3], [1, 2, 4])
    # cov / (sd sd) = 1.5 / sqrt(1 * 2.3333)
    assert r == pytest.approx(1.5 / math.sqrt(7 / 3), abs=1e-12)
    assert r == pytest.approx(0.982, abs=1e-3)
    ref = stats.pearsonr([1, 2, 3], [1, 2, 4])
    assert r == pytest.approx(ref[0], abs=1e-12)
    assert p == pytest.approx(ref[1], rel=1e-9)


def test_correlation_mappings_match_on_keys():
    r, _ = cross_index_correlation({"a": 1, "b": 2, "c": 3, "d": 9}, {"c": 4, "a": 1, "b": 2, "e": 0})
    assert r == pytest.approx(0.982, abs=1e-3)


def test_correlation_errors():
    with pytest.raises(DataError):
        cross_index_correlation([1, 2], [2, 3])
    with pytest.raises(DegenerateError):
        cross_index_correlation([1, 1, 1], [1, 2, 3])
    with pytest.raises(DataError):
        cross_index_correlation({"a": 1}, [1, 2, 3])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30),
    st.floats(0.1, 10), st.floats(-50, 50),
)
def test_correlation_properties(pairs, a, b):
    stats = pytest.importorskip("scipy.stats")
    xs, ys = [p[0] for p in pairs], [p[1] for p in pairs]
    if np.ptp(xs) < 1e-3 or np.ptp(ys) < 1e-3:
        return
    r, p = cross_index_correlation(xs, ys)
    assert -1 <= r <= 1 and 0 <= p <= 1
    assert cross_index_correlation(ys, xs)[0] == pytest.approx(r, abs=1e-12)
    assert cross_index_correlation([a * x + b for x in xs], ys)[0] == pytest.approx(r, abs=1e-9)
    ref_r, ref_p = stats.pearsonr(xs, ys)
    assert r == pytest.approx(ref_r, abs=1e-9)
    if abs(r) < 0.999999:
        assert p == pytest.approx(ref_p, rel=1e-6, abs=1e-12)


def test_parse_scores():
    scores = parse_scores(io.StringIO("country,score\nBR,55.5\nCN,\nDE,79.0\n"))
    assert scores == {"BR": 55.5, "DE": 79.0}
    with pytest.raises(DataError):
        parse_scores(io.StringIO("nation,value\nBR,1\n"))


def test_trend_csv_round_trip(tmp_path):
    s = yearly_series(panel({2010: [2, 3, 2, 3], 2011: [7, 8, 7, 8], 2013: [5, 6]}), "BR")
    buf = io.StringIO()
    write_trend(s, buf)
    assert buf.getvalue().splitlines()[0] == "year,n,mean,se,ci_low,ci_high,dev_flag,step_flag"
    assert parse_trend(io.StringIO(buf.getvalue()), "BR", s.country_mean, 9) == s

    path = tmp_path / "trend.csv"
    path.write_text(f"# country: BR\n# country_mean: {s.country_mean!r}\n# scale_max: 9\n" + buf.getvalue())
    assert parse_trend(path) == s


def test_parse_trend_needs_metadata():
    with pytest.raises(DataError):
        parse_trend(io.StringIO("year,n,mean,se,ci_low,ci_high,dev_flag,step_flag\n"))
