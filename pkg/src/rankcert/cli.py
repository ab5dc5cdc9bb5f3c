"""Command-line interface.

Subcommands: ``index``, ``reliability``, ``rank``, ``whatif``, ``trend`` and
``report``. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
degeneracy. ``--input builtin:nes2018`` loads the bundled 2018 summaries.
"""
from __future__ import annotations

import argparse
import os
import sys
from collections.abc import Sequence

from rankcert.errors import DataError, DegenerateError
from rankcert.index import (
    CompletenessPolicy,
    country_summaries,
    efc_summaries,
    expert_scores,
)
from rankcert.nes_data import (
    CountrySummary,
    SurveyDataset,
    concat_datasets,
    default_catalog,
    load_catalog,
    parse_responses,
    parse_summaries,
    read_records,
    nes2018_fixture,
    write_summaries,
)
from rankcert.rank_inference import (
    BootstrapConfig,
    estimates_from_samples,
    estimates_from_summaries,
    project_sample_size,
    projected_estimates,
    rank_confidence_sets,
    write_rank_sets,
)
from rankcert.reliability import (
    cronbach_alpha,
    duplication_check,
    expert_type_effects,
    icc_oneway,
    item_matrix,
)
from rankcert.report import (
    ReportBundle,
    emit_forest_chart,
    emit_rank_chart,
    emit_trend_chart,
    run_metadata,
    table_text,
)
from rankcert.trend import cross_index_correlation, parse_scores, write_trend, yearly_series

BUILTIN_NES2018 = "builtin:nes2018"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _alpha(text: str) -> float:
    value = float(text)
    if not 0 < value < 0.5:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 0.5), got {text}")
    return value


def _positive_int(minimum: int):
    def parse(text: str) -> int:
        value = int(text)
        if value < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}, got {text}")
        return value
    return parse


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"fraction must lie in (0, 1], got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", action="append", required=True, metavar="PATH",
                        help="micro-data or summary CSV; repeatable for multi-year panels")
    common.add_argument("--out", default="rankcert-out", metavar="DIR",
                        help="output directory, or a .csv path for the main table")
    common.add_argument("--scale", action="append", type=int, choices=(5, 9), metavar="5|9",
                        help="Likert scale of micro-data inputs; one value or one per --input")
    common.add_argument("--catalog", metavar="PATH", help="indicator_id,item_index override")
    common.add_argument("--min-fraction", type=_fraction, metavar="F",
                        help="score experts answering at least this share of items "
                             "(default: all items required)")
    common.add_argument("--seed", type=_seed, default=0, metavar="U64")

    boot = _Parser(add_help=False)
    boot.add_argument("--alpha", type=_alpha, default=0.05, metavar="F")
    boot.add_argument("--replicates", type=_positive_int(100), default=2000, metavar="N")
    boot.add_argument("--mode", choices=("parametric", "resample"), default="parametric")
    boot.add_argument("--scope", choices=("joint", "per_country"), default="joint",
                      help="max statistic over all pairs (joint) or per focal country")

    parser = _Parser(prog="rankcert", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("index", parents=[common], help="country and indicator summaries")
    rel = sub.add_parser("reliability", parents=[common], help="alpha, ICC and expert-type effects")
    rel.add_argument("--factor", type=_positive_int(2), default=10, metavar="N",
                     help="duplication factor for the ICC robustness check")
    sub.add_parser("rank", parents=[common, boot], help="rank confidence sets")
    whatif = sub.add_parser("whatif", parents=[common, boot], help="rank sets at a projected sample size")
    whatif.add_argument("--n-experts", type=_positive_int(2), required=True, metavar="N")
    trend = sub.add_parser("trend", parents=[common], help="yearly series for one country")
    trend.add_argument("--country", required=True, metavar="CODE")
    trend.add_argument("--compare", metavar="PATH",
                       help="country,score file to correlate with the latest-year country means")
    sub.add_parser("report", parents=[common, boot], help="forest chart, rank chart and tables")
    return parser


# --------------------------------------------------------------------------
# Input handling
# --------------------------------------------------------------------------

def _kind(path: str) -> str:
    if path == BUILTIN_NES2018:
        return "summary"
    header, _ = read_records(path)
    if "item_01" in header:
        return "micro"
    if {"country", "n", "mean", "sd"} <= set(header):
        return "summary"
    raise DataError(f"{path}: unrecognised CSV header")


def _scales(args) -> list[int]:
    scales = args.scale or [9]
    if len(scales) == 1:
        return scales * len(args.input)
    if len(scales) != len(args.input):
        raise UsageError("give one --scale or one per --input")
    return scales


def _load_micro(args) -> list[SurveyDataset]:
    out = []
    for path, scale in zip(args.input, _scales(args)):
        if _kind(path) != "micro":
            raise DataError(f"{path}: expected expert-level micro-data")
        out.append(parse_responses(path, scale))
    return out


def _load(args) -> tuple[list[CountrySummary], SurveyDataset | None]:
    kinds = [_kind(p) for p in args.input]
    if set(kinds) == {"summary"}:
        summaries: list[CountrySummary] = []
        for path in args.input:
            summaries += nes2018_fixture() if path == BUILTIN_NES2018 else parse_summaries(path)
        names = [s.country for s in summaries]
        if len(set(names)) != len(names):
            raise DataError("a country appears in more than one summary input")
        return summaries, None
    if "summary" in kinds:
        raise DataError("cannot mix summary and micro-data inputs")
    ds = concat_datasets(_load_micro(args))
    return country_summaries(ds, _policy(args)), ds


def _policy(args) -> CompletenessPolicy:
    if args.min_fraction is None:
        return CompletenessPolicy.require_all()
    return CompletenessPolicy.min_fraction(args.min_fraction)


def _config_echo(args) -> dict[str, object]:
    skip = {"out"}
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def _bootstrap_config(args) -> BootstrapConfig:
    return BootstrapConfig(args.replicates, args.alpha, args.seed, args.mode, args.scope)


def _emit(bundle: ReportBundle, out: str) -> None:
    """Write a bundle into directory ``out``.

    If ``out`` ends in ``.csv`` the first table is written to that path and
    the other files go alongside it, named after its stem.
    """
    if not out.lower().endswith(".csv"):
        for path in bundle.write(out):
            print(path)
        return
    parent, base = os.path.dirname(out), out[:-4]
    if parent:
        os.makedirs(parent, exist_ok=True)
    files = {**bundle.tables, **bundle.charts}
    primary = next(iter(bundle.tables))
    stem = primary.rsplit(".", 1)[0]
    for name, text in files.items():
        name_stem, ext = name.rsplit(".", 1)
        if name == primary:
            path = out
        elif name_stem == stem:
            path = f"{base}.{ext}"
        else:
            path = f"{base}_{name}"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(path)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_index(args) -> None:
    datasets = _load_micro(args)
    ds = concat_datasets(datasets)
    policy = _policy(args)
    catalog = load_catalog(args.catalog) if args.catalog else default_catalog()
    bundle = ReportBundle(run_metadata(_config_echo(args)))
    bundle.add_table("summary.csv", table_text(write_summaries, country_summaries(ds, policy)))
    lines = ["indicator,country,n,mean,sd,se"]
    for ind, rows in efc_summaries(ds, catalog, policy).items():
        for s in rows:
            lines.append(f"{ind},{_csv_cell(s.country)},{s.n},{s.mean!r},{s.sd!r},{s.se!r}")
    bundle.add_table("efc_scores.csv", "\n".join(lines) + "\n")
    _emit(bundle, args.out)


def _csv_cell(text: str) -> str:
    return f'"{text}"' if any(c in text for c in ',"\n') else text


def _alpha_row(scope: str, ds: SurveyDataset, items) -> str:
    try:
        return f"alpha,{scope},{cronbach_alpha(item_matrix(ds, items))!r},"
    except (DataError, DegenerateError):
        return f"alpha,{scope},nan,degenerate"


def cmd_reliability(args) -> None:
    ds = concat_datasets(_load_micro(args))
    policy = _policy(args)
    catalog = load_catalog(args.catalog) if args.catalog else default_catalog()
    rows = ["statistic,scope,value,se_or_flag", _alpha_row("NECI", ds, None)]
    for cond in catalog.conditions():
        members = [i for i in catalog if i.condition == cond]
        if len(members) > 1:
            rows.append(_alpha_row(f"condition {cond}", ds, catalog.items_for(cond)))
    for ind in catalog:
        rows.append(_alpha_row(f"indicator {ind.id}", ds, ind.item_ids))

    groups = list(expert_scores(ds, policy).values())
    icc = icc_oneway(groups)
    dup = duplication_check(groups, args.factor)
    rows.append(f"icc,NECI,{icc.icc!r},{'truncated' if icc.truncated else ''}")
    rows.append(f"icc_duplicated_x{args.factor},NECI,{dup.icc!r},{'truncated' if dup.truncated else ''}")
    effects = expert_type_effects(ds, policy)
    for name, eff in effects.effects.items():
        rows.append(f"type_delta,{_csv_cell(name)},{eff.delta!r},{eff.se!r}")
        rows.append(f"type_pvalue,{_csv_cell(name)},{eff.p_value!r},{'significant' if eff.significant else ''}")
    bundle = ReportBundle(run_metadata(_config_echo(args)))
    bundle.add_table("reliability.csv", "\n".join(rows) + "\n")
    _emit(bundle, args.out)


def _rank_outputs(args, sets, estimates, stem: str, title: str) -> None:
    meta = run_metadata(_config_echo(args))
    bundle = ReportBundle(meta)
    bundle.add_table(f"{stem}.csv", table_text(write_rank_sets, sets, estimates))
    bundle.charts[f"{stem}.svg"] = emit_rank_chart(sets, meta, title)
    _emit(bundle, args.out)


def _rank_sets(args, summaries, ds, cfg):
    if cfg.mode == "resample":
        if ds is None:
            raise DataError("resample mode needs expert-level micro-data input")
        samples = expert_scores(ds, _policy(args))
        estimates = estimates_from_samples(samples)
        return estimates, rank_confidence_sets(estimates, cfg, samples)
    estimates = estimates_from_summaries(summaries)
    return estimates, rank_confidence_sets(estimates, cfg)


def cmd_rank(args) -> None:
    summaries, ds = _load(args)
    cfg = _bootstrap_config(args)
    estimates, sets = _rank_sets(args, summaries, ds, cfg)
    level = round(100 * (1 - cfg.alpha), 6)
    _rank_outputs(args, sets, estimates, "ranks", f"Rank with {level:g}% simultaneous confidence set")


def cmd_whatif(args) -> None:
    summaries, _ = _load(args)
    cfg = _bootstrap_config(args)
    sets = project_sample_size(summaries, args.n_experts, cfg)
    projected = projected_estimates(summaries, args.n_experts)
    level = round(100 * (1 - cfg.alpha), 6)
    _rank_outputs(
        args, sets, projected, f"ranks_n{args.n_experts}",
        f"Rank with {level:g}% confidence set, {args.n_experts} experts per country",
    )


def cmd_trend(args) -> None:
    datasets = _load_micro(args)
    policy = _policy(args)
    series = yearly_series(datasets, args.country, policy)
    meta = run_metadata({**_config_echo(args), "country_mean": repr(series.country_mean),
                         "scale_max": series.scale_max})
    bundle = ReportBundle(meta)
    bundle.add_table("trend.csv", table_text(write_trend, series))
    bundle.charts["trend.svg"] = emit_trend_chart(series, meta)
    if args.compare:
        scores = parse_scores(args.compare)
        latest = max(r.year for d in datasets for r in d)
        means = {}
        for d in datasets:
            sub = d.filter(year=latest)
            if len(sub):
                means.update({s.country: s.mean for s in country_summaries(sub, policy)})
        r, p = cross_index_correlation(means, scores)
        n = sum(1 for k in means if k in scores)
        bundle.add_table("correlation.csv", f"year,n,r,p_value\n{latest},{n},{r!r},{p!r}\n")
    _emit(bundle, args.out)


def cmd_report(args) -> None:
    summaries, ds = _load(args)
    cfg = _bootstrap_config(args)
    meta = run_metadata(_config_echo(args))
    estimates, sets = _rank_sets(args, summaries, ds, cfg)
    bundle = ReportBundle(meta)
    bundle.add_table("summary.csv", table_text(write_summaries, summaries))
    bundle.add_table("ranks.csv", table_text(write_rank_sets, sets, estimates))
    bundle.charts["forest.svg"] = emit_forest_chart(summaries, meta)
    bundle.charts["ranks.svg"] = emit_rank_chart(sets, meta)
    _emit(bundle, args.out)


COMMANDS = {
    "index": cmd_index,
    "reliability": cmd_reliability,
    "rank": cmd_rank,
    "whatif": cmd_whatif,
    "trend": cmd_trend,
    "report": cmd_report,
}


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DegenerateError as exc:
        print(f"rankcert: numeric degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DataError as exc:
        print(f"rankcert: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"rankcert: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
