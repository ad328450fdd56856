import numpy as np
import pytest

from thirdgrade.fields import Grid, random_velocity


@pytest.fixture
def grid16():
    return Grid(16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_fields(grid, rng, count, **kw):
    kw.setdefault("l2_norm", 1.0)
    return [random_velocity(grid, rng, **kw) for _ in range(count)]


# acceptance recorder: one pass/fail line per criterion in the terminal summary
_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    label, title = marker.args
    prev_passed, _, props = _CRITERIA.get(label, (True, title, []))
    _CRITERIA[label] = (prev_passed and report.passed, title, props + list(item.user_properties))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, (passed, title, props) in sorted(_CRITERIA.items()):
        detail = ", ".join(f"{k}={v}" for k, v in props)
        line = f"{label} {'PASS' if passed else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
