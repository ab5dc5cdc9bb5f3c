import io

import numpy as np
import pytest

from rankcert.nes_data import N_ITEMS, ExpertResponse, SurveyDataset, parse_responses


def response(country="KR", year=2018, expert_type="entrepreneur", items=None, fill=5):
    if items is None:
        items = [fill] * N_ITEMS
    return ExpertResponse(country, year, expert_type, tuple(items))


def csv_row(country, year, expert_type, items):
    cells = ["" if v is None else str(v) for v in items]
    return ",".join([country, str(year), expert_type] + cells)


HEADER = "country,year,expert_type," + ",".join(f"item_{i:02d}" for i in range(1, N_ITEMS + 1))


def parse_rows(*rows, scale_max=9):
    return parse_responses(io.StringIO("\n".join([HEADER, *rows]) + "\n"), scale_max)


def constant_expert_dataset(scores_by_country, year=2018, expert_type="entrepreneur", scale_max=9):
    """One expert per score, every item equal to that score (integer)."""
    rows = []
    for country, scores in scores_by_country.items():
        for s in scores:
            rows.append(response(country, year, expert_type, fill=s))
    return SurveyDataset(tuple(rows), scale_max)


def random_dataset(rng, countries=4, experts=(3, 8), types=("entrepreneur", "policymaker", "investor"),
                   missing=0.0, scale_max=9, year=2018):
    rows = []
    for c in range(countries):
        shift = rng.integers(-2, 3)
        for _ in range(rng.integers(*experts)):
            base = np.clip(rng.integers(1, scale_max + 1, N_ITEMS) + shift, 1, scale_max)
            items = [int(v) if rng.random() >= missing else None for v in base]
            rows.append(ExpertResponse(f"C{c}", year, str(rng.choice(types)), tuple(items)))
    return SurveyDataset(tuple(rows), scale_max)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results, key=int):
            terminalreporter.write_line(results[key])
