import math

import pytest

from qbrachy.pipeline import solve
from qbrachy.shooting import minimize

# lines recorded by the acceptance module, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def optimum():
    return minimize((0.9, 0.3 * math.pi), "bfgs")


@pytest.fixture(scope="session")
def solution(optimum):
    return solve(result=optimum)
