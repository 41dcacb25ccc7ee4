import math

import pytest

from kljn import ResistorPair, explicit_assignment, johnson_scaling

R_L, R_H = 1e3, 1e4


@pytest.fixture
def pair():
    return ResistorPair(R_L, R_H)


@pytest.fixture
def gauss_secure(pair):
    return johnson_scaling(pair, "gaussian", 1.0)


@pytest.fixture
def gauss_fig2():
    # sigma_VL = 1, sigma_VH / sigma_VL = 1.5
    return explicit_assignment("gaussian", 1.0, 1.5)


@pytest.fixture
def cauchy_secure(pair):
    return johnson_scaling(pair, "stable", 1.0, alpha=1.0)


@pytest.fixture
def uniform_secure(pair):
    return johnson_scaling(pair, "uniform", 1.0)


def all_families(pair):
    """(name, assignment) for every family exercised by the structural checks."""
    return [
        ("gaussian_secure", johnson_scaling(pair, "gaussian", 1.0)),
        ("gaussian_misscaled", explicit_assignment("gaussian", 1.0, 1.5)),
        ("stable_1.0", johnson_scaling(pair, "stable", 1.0, alpha=1.0)),
        ("stable_1.5", johnson_scaling(pair, "stable", 1.0, alpha=1.5)),
        ("uniform", johnson_scaling(pair, "uniform", 1.0)),
    ]


def binomial_band(n, p, z):
    """Normal-approximation band for a binomial count."""
    sd = math.sqrt(n * p * (1 - p))
    return n * p - z * sd, n * p + z * sd


# -- acceptance reporting ---------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion of the build")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call" and not report.failed:
        return
    number, title = marker.args
    prev = _ACCEPTANCE.get(item.nodeid, (number, title, "PASS"))
    status = "FAIL" if report.failed else prev[2]
    _ACCEPTANCE[item.nodeid] = (number, title, status)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    by_number = {}
    for number, title, status in _ACCEPTANCE.values():
        _, prev = by_number.get(number, (title, "PASS"))
        by_number[number] = (title, "FAIL" if "FAIL" in (status, prev) else "PASS")
    terminalreporter.section("acceptance criteria")
    for number in sorted(by_number):
        title, status = by_number[number]
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}")
