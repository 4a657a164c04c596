import numpy as np
import pytest

from homogenize import drivers

ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def doubling():
    return drivers.make_system({"kind": "doubling"})


@pytest.fixture
def cat():
    return drivers.make_system({"kind": "cat"})


@pytest.fixture
def two_component():
    """``v = (cos 2 pi x, cos 4 pi x)`` on the doubling map."""
    return drivers.trig_observable([1, 2])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
