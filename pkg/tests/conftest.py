import numpy as np
import pytest
from hypothesis import settings

from helpers import SMALL_RECORDS
from sfpinfer import estimate_q
from sfpinfer.fileio import ingest_records

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(params=range(5))
def rng(request):
    return np.random.default_rng(request.param)


@pytest.fixture(scope="session")
def small_chain():
    return ingest_records(SMALL_RECORDS)


@pytest.fixture(scope="session")
def small_untracked(small_chain):
    return small_chain.as_untracked(estimate_q(small_chain))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    n, title = marker.args
    detail = dict(item.user_properties).get("detail", str(call.excinfo.value) if call.excinfo else "")
    item.config._criteria[n] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_criteria", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        status, title, detail = results[n]
        terminalreporter.write_line(f"criterion {n} {status}: {title}; {detail}")
