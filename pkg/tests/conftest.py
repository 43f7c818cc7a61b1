import numpy as np
import pytest

from harvestopt.core import SpeciesRecord, build_harvest_matrix, build_week_mapping

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy():
    """Two species on a 14-day horizon with 10 GDU per day."""
    g_acc = np.full(14, 10.0)
    species = [
        SpeciesRecord("a", 0, 0, 3, 25.0, 5.0, 1),
        SpeciesRecord("b", 0, 2, 6, 45.0, 7.0, 5),
    ]
    H = build_harvest_matrix(g_acc, species)
    W = build_week_mapping(14)
    return g_acc, species, H, W


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
