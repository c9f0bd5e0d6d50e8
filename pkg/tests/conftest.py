import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from specdemand.pipeline import process_region  # noqa: E402
from specdemand.synthgen import RegionProfile, default_coupling, radial_density  # noqa: E402


def tiny_profile(name="tiny", n=3, years=(2019, 2020), spw=30.0):
    return RegionProfile(name=name, bbox=(45.0, 45.0 + 0.01 * n, -76.0, -76.0 + 0.01 * n),
                         density_map=radial_density(n, n, spread=1.0, floor=0.3),
                         samples_per_window=spw, years=years)


@pytest.fixture(scope="session")
def tiny_run():
    return process_region(tiny_profile(), default_coupling(), seed=3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
