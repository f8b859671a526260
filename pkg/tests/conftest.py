import numpy as np
import pytest

from nmog.hsi_data import Cube
from nmog.noise_sim import planted_cube


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def planted_small():
    cube, _, _ = planted_cube(20, 20, 8, 3, seed=0)
    return cube


def random_cube(rng, rows=4, cols=5, bands=3):
    return Cube(rng.random((rows, cols, bands)))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
