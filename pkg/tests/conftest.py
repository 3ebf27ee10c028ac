import numpy as np
import pytest

from frontprop.checks import execute
from frontprop.grid import Grid, datum_from_profile
from frontprop.scenarios import builtin_scenario

def pytest_configure(config):
    config.acceptance_lines = {}


def pytest_terminal_summary(terminalreporter):
    lines = terminalreporter.config.acceptance_lines
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])


@pytest.fixture
def criterion(request):
    """``criterion(k, ok, detail)`` records one pass/fail line for the terminal summary."""

    def record(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}"
        request.config.acceptance_lines[k] = line
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def s1_run():
    return execute(builtin_scenario("S1"))


@pytest.fixture(scope="session")
def s2_run():
    return execute(builtin_scenario("S2"))


@pytest.fixture(scope="session")
def s3_run():
    return execute(builtin_scenario("S3"))


@pytest.fixture
def disk_grid():
    return Grid.box(-2.0, 2.0, 0.04)


@pytest.fixture
def disk_datum(disk_grid):
    r = disk_grid.radius()
    return datum_from_profile(np.clip(1 - r, -0.5, 0.5), disk_grid, floor=-0.5)
