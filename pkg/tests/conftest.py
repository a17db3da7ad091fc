import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_criteria = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    # one line per acceptance criterion in the terminal summary
    marker = "test_acceptance.py::test_criterion_"
    if marker not in report.nodeid:
        return
    name = report.nodeid.split(marker, 1)[1]
    if report.when == "call" or report.outcome != "passed":
        prev = _criteria.get(name)
        if prev != "FAIL":
            _criteria[name] = "PASS" if report.outcome == "passed" else (
                "SKIP" if report.outcome == "skipped" else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        num, _, label = name.partition("_")
        terminalreporter.write_line(f"criterion {int(num):2d} {_criteria[name]}  {label.replace('_', ' ')}")
