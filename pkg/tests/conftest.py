import numpy as np
import pytest
from hypothesis import settings

from gbtrack.simulator import SimConfig, simulate

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def clean_small():
    """Noiseless 64 x 6 x 80 volume and its rounded truth."""
    v, truth, _ = simulate(SimConfig(n_depth=64, n_channels=6, n_scans=80, surface_base=32.0,
                                     surface_sigma=0.5, seed=11))
    return v, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
