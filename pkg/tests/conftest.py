import math
import re
import time

import numpy as np
import pytest

from cospm.kinematics import DesignParameters
from cospm.simulation import SimulationConfig, run

DEG = math.pi / 180


@pytest.fixture(scope="session")
def design():
    return DesignParameters()


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(re.search(r"\d+", s).group())):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_run():
    """The 30 s closed-loop run at default settings and its wall time (shared, ~25 s)."""
    t0 = time.perf_counter()
    trace = run(SimulationConfig())
    return trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def default_trace(default_run):
    return default_run[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_workspace_chi(rng, n):
    chi = np.zeros((n, 3))
    chi[:, 0] = rng.uniform(-10 * DEG, 10 * DEG, n)
    chi[:, 1] = rng.uniform(-50 * DEG, 50 * DEG, n)
    return chi
