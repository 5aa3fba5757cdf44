from importlib import resources
from pathlib import Path

import pytest

from earthbt.actionseq import parse
from earthbt.scenario import find_scenario, load_catalog, paramdb_for

DATA = Path(str(resources.files("earthbt") / "data"))
FIXTURES = DATA / "fixtures"

FIGURE_TEXT = (DATA / "figure_example.aseq").read_text()


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture
def figure_seq():
    return parse(FIGURE_TEXT)


@pytest.fixture
def site():
    """Excavator + one dump truck site (the figure example's machines)."""
    return find_scenario(21)


@pytest.fixture
def site_db(site):
    return paramdb_for(site)


# -- acceptance summary -------------------------------------------------------

_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion covered by a test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            n, text = mark.args
            _CRITERIA[n] = [text, None, item.nodeid]


def pytest_runtest_logreport(report):
    for entry in _CRITERIA.values():
        if entry[2] != report.nodeid:
            continue
        if report.failed:
            entry[1] = False
        elif report.when == "call" and entry[1] is None:
            entry[1] = report.passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        text, ok, _ = _CRITERIA[n]
        verdict = "not run" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"criterion {n} [PRIMARY] {verdict}: {text}")
