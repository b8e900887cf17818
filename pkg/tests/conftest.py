import numpy as np
import pytest

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _criteria[num] = (title, "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, status = _criteria[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {title}")


def random_instance(rng, m, k, T, lo=0.9, hi=1.1):
    """Random component portfolios (T, k, m) and gross returns (T, m)."""
    comps = rng.dirichlet(np.ones(m), size=(T, k))
    X = rng.uniform(lo, hi, size=(T, m))
    return comps, X


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
