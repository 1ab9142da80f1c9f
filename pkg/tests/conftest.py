import math
from collections import OrderedDict

import numpy as np
import pytest

from gcmaster.spectral import decompose
from gcmaster.thermo import ModelSpec, TruncationPolicy

E = math.e


def ladder(beta, mu, size=60):
    """Finite harmonic ladder lambda_m = N_m = m, m = 1..size."""
    m = np.arange(1, size + 1)
    return ModelSpec.table(m.astype(float), m, beta=beta, mu=mu)


@pytest.fixture(scope="session")
def hand():
    """Two-level model lambda = (1, 2), no particles, beta = 1."""
    return ModelSpec.table([1.0, 2.0], beta=1.0), TruncationPolicy(2)


@pytest.fixture(scope="session")
def harmonic():
    def make(beta=1.0, M=60, tail_tol=1e-8):
        return ModelSpec.harmonic(beta), TruncationPolicy(M, tail_tol)
    return make


@pytest.fixture(scope="session")
def dec40():
    return decompose(ModelSpec.harmonic(1.0), TruncationPolicy(40))


@pytest.fixture(scope="session")
def dec60():
    return decompose(ModelSpec.harmonic(1.0), TruncationPolicy(60))


@pytest.fixture(scope="session")
def dec80():
    return decompose(ModelSpec.harmonic(1.0), TruncationPolicy(80))


_criteria = OrderedDict()


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker
    prev = _criteria.get(number, (title, True))
    _criteria[number] = (title, prev[1] and report.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}")
