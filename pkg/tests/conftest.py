import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def two_area():
    from agcsim.sim import two_area_system
    return two_area_system(1.5)


@pytest.fixture(scope="session")
def paper_runs():
    """Full + reduced two-area experiments for all three tunings (computed once)."""
    from agcsim.sim import run_paper_experiment
    return {t: run_paper_experiment(t) for t in ("overbiased", "underbiased", "matched")}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _report import LINES

    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(LINES):
        terminalreporter.write_line(LINES[key])
