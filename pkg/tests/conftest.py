import time

import numpy as np
import pytest

from dnls.nonlin import catalog
from dnls.spectral import Grid1D, SolverConfig, gaussian, run

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    info = dict(report.user_properties)
    if "criterion" in info:
        _CRITERIA[info["criterion"]] = (info.get("title", ""), report.outcome,
                                        info.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[num]
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] criterion {num:2d}: {title}  {detail}".rstrip())


@pytest.fixture(scope="session")
def grid():
    return Grid1D(60.0, 2048)


@pytest.fixture(scope="session")
def crossing_data(grid):
    """Unscaled two-component Gaussians with frequency centres -1 and +1."""
    return np.array([gaussian(grid.x, shift=-1.0), gaussian(grid.x, shift=1.0)])


@pytest.fixture(scope="session")
def fixture_seconds():
    """Wall time spent building the shared simulation fixtures, by name."""
    return {}


@pytest.fixture(scope="session")
def crossing_run(grid, crossing_data, fixture_seconds):
    """eps = 0.2 crossing-Gaussian run to T = 1e4."""
    t0 = time.perf_counter()
    tr = run(catalog("two_component_lnss"), 0.2 * crossing_data, grid, SolverConfig(t_end=1e4))
    fixture_seconds["crossing_run"] = time.perf_counter() - t0
    return tr


@pytest.fixture(scope="session")
def decay_runs(grid, fixture_seconds):
    """eps = 0.3 Gaussian runs to 1e4 for the A0, Weak and A+ catalog entries."""
    t0 = time.perf_counter()
    phi = 0.3 * gaussian(grid.x)
    names = {"A0": "cubic_conservative", "Weak": "weak_grad", "APlus": "kita_dissipative"}
    out = {k: run(catalog(v), phi, grid, SolverConfig(t_end=1e4)) for k, v in names.items()}
    fixture_seconds["decay_runs"] = time.perf_counter() - t0
    return out
