import numpy as np
import pytest

from levelshape.grid import Grid2D, ObservationSet, ScalarField


@pytest.fixture
def square65():
    return Grid2D.from_box(-1.0, -1.0, 2.0, 2.0, 65)


@pytest.fixture
def small_disk():
    return ObservationSet.disk(0.0, 0.0, 0.1)


def circle(grid, r=0.5):
    return ScalarField.from_function(grid, lambda x, y: x**2 + y**2 - r**2)


def rng(seed=1234):
    return np.random.default_rng(seed)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
