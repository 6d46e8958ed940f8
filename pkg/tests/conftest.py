import numpy as np
import pytest

from noncanon.model import ModeSet


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


@pytest.fixture
def three_modes():
    return ModeSet([0.8, 1.0, 1.3], [0.2, 0.5, 0.3])


def random_map(rng, M, scale=1.0):
    return scale * (rng.normal(size=(M, 2)) + 1j * rng.normal(size=(M, 2)))


# ---------------------------------------------------------------------------
# one line per acceptance criterion in the terminal summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "duration": 0.0})
    entry["duration"] += rep.duration
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {number:2d}: {e['title']} ({e['duration']:.1f} s)")
