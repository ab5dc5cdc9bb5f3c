import io
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import random_dataset, response
from rankcert.cli import run_cli
from rankcert.nes_data import (
    CountrySummary,
    SurveyDataset,
    parse_summaries,
    read_metadata,
    nes2018_fixture,
)
from rankcert.rank_inference import (
    BootstrapConfig,
    RankConfidenceSet,
    estimates_from_summaries,
    parse_rank_sets,
    rank_confidence_sets,
)
from rankcert.report import emit_forest_chart, emit_rank_chart, emit_trend_chart, run_metadata
from rankcert.trend import TrendPoint, TrendSeries, parse_trend

NS = {"s": "http://www.w3.org/2000/svg"}


def parse_svg(text):
    root = ET.fromstring(text.encode())
    assert root.tag == "{http://www.w3.org/2000/svg}svg"
    return root


def rows(root):
    return root.findall("s:g[@class='row']", NS)


def whisker_width(row):
    line = row.find("s:line[@class='ci']", NS)
    return float(line.get("x2")) - float(line.get("x1"))


# --- charts -----------------------------------------------------------------

def test_forest_nes2018():
    root = parse_svg(emit_forest_chart(nes2018_fixture(), {"seed": "1"}))
    rs = rows(root)
    assert len(rs) == 54
    assert rs[0].get("data-country") == "Indonesia"
    assert rs[-1].get("data-country") == "Mozambique"
    ys = [float(r.find("s:circle", NS).get("cy")) for r in rs]
    assert ys == sorted(ys)


def test_forest_single_country_whisker():
    s = CountrySummary("X", 4, 3.0, 1.0)
    root = parse_svg(emit_forest_chart([s]))
    (row,) = rows(root)
    # pixels per unit from the axis ticks
    ticks = [t for t in root.findall("s:line[@class='tick']", NS)]
    labels = [float(t.text) for t in root.findall("s:text", NS)[-len(ticks) - 1:-1]]
    px_per_unit = (float(ticks[-1].get("x1")) - float(ticks[0].get("x1"))) / (labels[-1] - labels[0])
    assert whisker_width(row) == pytest.approx(2 * 1.96 * s.se * px_per_unit, abs=0.02)


def test_forest_zero_se():
    (row,) = rows(parse_svg(emit_forest_chart([CountrySummary("X", 1, 3.0, 0.0)])))
    assert whisker_width(row) == 0.0


def test_forest_escapes_names():
    root = parse_svg(emit_forest_chart([CountrySummary('A & "B" <C>', 3, 2.0, 1.0)]))
    assert rows(root)[0].get("data-country") == 'A & "B" <C>'


def test_rank_chart_bars():
    sets = [
        RankConfidenceSet("a", 1, 1, 1),
        RankConfidenceSet("b", 2, 2, 3),
        RankConfidenceSet("c", 3, 2, 3),
    ]
    rs = rows(parse_svg(emit_rank_chart(sets)))
    assert [r.get("data-country") for r in rs] == ["a", "b", "c"]
    assert rs[0].find("s:rect[@class='bar']", NS) is None
    assert rs[0].find("s:circle[@class='point']", NS) is not None
    assert rs[1].find("s:rect[@class='bar']", NS) is not None


def test_rank_chart_nes2018_bounds():
    ests = estimates_from_summaries(nes2018_fixture())
    sets = rank_confidence_sets(ests, BootstrapConfig(replicates=500, seed=42))
    root = parse_svg(emit_rank_chart(sets))
    rs = rows(root)
    assert len(rs) == 54 and rs[0].get("data-country") == "Indonesia"
    assert int(rs[0].get("data-lower")) == 1 and int(rs[0].get("data-upper")) >= 20
    axis = root.find("s:line[@class='axis']", NS)
    x_lo, x_hi = float(axis.get("x1")), float(axis.get("x2"))
    for r in rs:
        assert 1 <= int(r.get("data-lower")) <= int(r.get("data-upper")) <= 54
        bar = r.find("s:rect[@class='bar']", NS)
        if bar is not None:
            x, w = float(bar.get("x")), float(bar.get("width"))
            assert x_lo - 1e-6 <= x and x + w <= x_hi + 0.011


def trend_series(flag_index=None, n=12):
    pts = []
    for i in range(n):
        mean = 4.0 + (1.0 if i == flag_index else 0.0)
        pts.append(TrendPoint("BR", 2007 + i, 10, mean, 0.05, i == flag_index, False))
    return TrendSeries("BR", tuple(pts), 4.0)


def test_trend_chart_element_counts():
    root = parse_svg(emit_trend_chart(trend_series()))
    years = root.findall("s:g[@class='year']", NS)
    assert len(years) == 12
    assert all(y.find("s:line[@class='ci']", NS) is not None for y in years)
    dashed = [e for e in root.iter() if e.get("stroke-dasharray")]
    assert len(dashed) == 1 and dashed[0].get("class") == "country-mean"


def test_trend_chart_flagged_marker():
    root = parse_svg(emit_trend_chart(trend_series(flag_index=5)))
    flagged = root.findall(".//s:rect[@class='point flagged']", NS)
    assert len(flagged) == 1
    assert len(root.findall(".//s:circle[@class='point']", NS)) == 11


def test_trend_chart_constant_series_on_line():
    root = parse_svg(emit_trend_chart(trend_series()))
    y_line = float(root.find("s:line[@class='country-mean']", NS).get("y1"))
    assert all(float(c.get("cy")) == y_line for c in root.findall(".//s:circle", NS))


def test_metadata_comment_and_determinism():
    meta = run_metadata({"seed": 42, "input": ["a.csv", "b.csv"]})
    assert meta["input"] == "a.csv;b.csv"
    assert "numpy_version" in meta
    a = emit_forest_chart(nes2018_fixture(), meta)
    assert a == emit_forest_chart(nes2018_fixture(), meta)
    assert "<!--" in a and "seed: 42" in a


def test_empty_charts_rejected():
    with pytest.raises(ValueError):
        emit_forest_chart([])
    with pytest.raises(ValueError):
        emit_rank_chart([])


# --- CLI ------------------------------------------------------------------

def run(*argv):
    return run_cli([str(a) for a in argv])


def test_rank_builtin_nes2018(tmp_path, capsys):
    out = tmp_path / "ranks.csv"
    assert run("rank", "--input", "builtin:nes2018", "--seed", 42, "--alpha", 0.05,
               "--replicates", 2000, "--out", out) == 0
    sets, ests = parse_rank_sets(out)
    assert len(sets) == 54
    assert read_metadata(out)["seed"] == "42"
    parse_svg((tmp_path / "ranks.svg").read_text())


def test_rank_from_summary_file(tmp_path):
    src = tmp_path / "t1.csv"
    from rankcert.nes_data import nes2018_csv

    src.write_text(nes2018_csv())
    assert run("rank", "--input", src, "--replicates", 200, "--out", tmp_path / "o") == 0
    assert len(parse_rank_sets(tmp_path / "o" / "ranks.csv")[0]) == 54


def test_missing_input_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run("rank", "--input", missing, "--out", tmp_path) == 2
    assert "nope.csv" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["rank", "--input", "builtin:nes2018", "--alpha", "0.7"],
    ["rank", "--input", "builtin:nes2018", "--replicates", "50"],
    ["rank", "--input", "builtin:nes2018", "--bogus"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_1(argv, capsys):
    assert run_cli(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_degenerate_exit_3(tmp_path):
    src = tmp_path / "s.csv"
    src.write_text("country,n,mean,sd\nA,1,3.0,0.0\nB,1,4.0,0.0\n")
    assert run("rank", "--input", src, "--out", tmp_path / "o") == 3


def test_malformed_summary_exit_2(tmp_path):
    src = tmp_path / "s.csv"
    src.write_text("country,n,mean,sd\nA,x,3.0,0.5\n")
    assert run("rank", "--input", src, "--out", tmp_path / "o") == 2


def test_rank_byte_identical_across_thread_caps(tmp_path, monkeypatch):
    outs = []
    for i, threads in enumerate(["1", "4"]):
        monkeypatch.setenv("RANKCERT_THREADS", threads)
        d = tmp_path / f"run{i}"
        assert run("rank", "--input", "builtin:nes2018", "--seed", 7, "--replicates", 500, "--out", d) == 0
        outs.append(((d / "ranks.csv").read_bytes(), (d / "ranks.svg").read_bytes()))
    assert outs[0] == outs[1]


def test_whatif(tmp_path):
    assert run("whatif", "--input", "builtin:nes2018", "--n-experts", 100, "--replicates", 300,
               "--out", tmp_path) == 0
    sets, ests = parse_rank_sets(tmp_path / "ranks_n100.csv")
    assert len(sets) == 54
    by = {e.id: e for e in ests}
    assert by["Indonesia"].se == pytest.approx(1.497 / 10, abs=1e-12)
    assert run("whatif", "--input", "builtin:nes2018", "--n-experts", 1, "--out", tmp_path) == 1


def write_micro(path, ds):
    buf = io.StringIO()
    ds.to_csv(buf)
    path.write_text(buf.getvalue())


@pytest.fixture
def micro(tmp_path):
    ds = random_dataset(np.random.default_rng(5), countries=5, experts=(6, 10), missing=0.002)
    path = tmp_path / "micro.csv"
    write_micro(path, ds)
    return path


def test_index_subcommand(tmp_path, micro):
    out = tmp_path / "idx"
    assert run("index", "--input", micro, "--out", out) == 0
    summaries = parse_summaries(out / "summary.csv")
    assert [s.country for s in summaries] == [f"C{i}" for i in range(5)]
    efc = (out / "efc_scores.csv").read_text().splitlines()
    assert efc[[i for i, l in enumerate(efc) if not l.startswith("#")][0]] == "indicator,country,n,mean,sd,se"


def test_reliability_subcommand(tmp_path, micro):
    out = tmp_path / "rel"
    assert run("reliability", "--input", micro, "--out", out) == 0
    text = (out / "reliability.csv").read_text()
    for stat in ["alpha,NECI,", "icc,NECI,", "icc_duplicated_x10,NECI,", "type_delta,entrepreneur,"]:
        assert stat in text


def test_report_subcommand_byte_identical(tmp_path, micro):
    for d in ["a", "b"]:
        assert run("report", "--input", micro, "--replicates", 200, "--seed", 3, "--out", tmp_path / d) == 0
    for name in ["summary.csv", "ranks.csv", "forest.svg", "ranks.svg"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    parse_svg((tmp_path / "a" / "forest.svg").read_text())
    parse_rank_sets(tmp_path / "a" / "ranks.csv")


def test_rank_resample_mode(tmp_path, micro):
    assert run("rank", "--input", micro, "--mode", "resample", "--replicates", 200, "--out", tmp_path / "r") == 0
    assert run("rank", "--input", "builtin:nes2018", "--mode", "resample", "--out", tmp_path / "x") == 2


def test_trend_subcommand(tmp_path):
    rows = []
    rng = np.random.default_rng(2)
    for y in range(2007, 2019):
        rows += [response(c, y, fill=int(v)) for c in ["BR", "CN", "DE"] for v in rng.integers(2, 8, 5)]
    panel = tmp_path / "panel.csv"
    write_micro(panel, SurveyDataset(tuple(rows), 9))
    scores = tmp_path / "db.csv"
    scores.write_text("country,score\nBR,60\nCN,70\nDE,80\n")
    out = tmp_path / "tr"
    assert run("trend", "--input", panel, "--country", "BR", "--compare", scores, "--out", out) == 0
    series = parse_trend(out / "trend.csv")
    assert len(series.points) == 12 and series.scale_max == 9
    assert len(parse_svg((out / "trend.svg").read_text()).findall("s:g[@class='year']", NS)) == 12
    assert "year,n,r,p_value" in (out / "correlation.csv").read_text()
    assert run("trend", "--input", panel, "--country", "XX", "--out", out) == 2


def test_multi_wave_trend_remaps(tmp_path):
    old = SurveyDataset(tuple(response("BR", 2012, fill=v) for v in [3, 5]), 5)
    new = SurveyDataset(tuple(response("BR", 2016, fill=v) for v in [9, 5]), 9)
    write_micro(tmp_path / "old.csv", old)
    write_micro(tmp_path / "new.csv", new)
    out = tmp_path / "tr"
    assert run("trend", "--input", tmp_path / "old.csv", "--input", tmp_path / "new.csv",
               "--scale", 5, "--scale", 9, "--country", "BR", "--out", out) == 0
    series = parse_trend(out / "trend.csv")
    assert [p.mean for p in series.points] == [4.0, 4.0] and series.scale_max == 5


def test_out_as_csv_path(tmp_path):
    rows = [response("BR", y, fill=v) for y in (2017, 2018) for v in (3, 5, 4)]
    rows += [response("CN", 2018, fill=v) for v in (2, 4)] + [response("DE", 2018, fill=v) for v in (6, 8)]
    panel = tmp_path / "panel.csv"
    write_micro(panel, SurveyDataset(tuple(rows), 9))
    scores = tmp_path / "db.csv"
    scores.write_text("country,score\nBR,60\nCN,70\nDE,80\n")
    out = tmp_path / "res" / "trend.csv"
    assert run("trend", "--input", panel, "--country", "BR", "--compare", scores, "--out", out) == 0
    assert out.is_file()
    assert (tmp_path / "res" / "trend.svg").is_file()
    assert (tmp_path / "res" / "trend_correlation.csv").is_file()
    assert len(parse_trend(out).points) == 2
