import time

import pytest

from ifeatt import simulation

#: one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid1000():
    """Full benchmark grid at n=1000, 1000 reps, with its wall time."""
    t0 = time.perf_counter()
    result = simulation.run_grid(simulation.default_grid(n=1000, reps=1000))
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def grid250():
    """Full benchmark grid at n=250, 1000 reps."""
    return simulation.run_grid(simulation.default_grid(n=250, reps=1000))
