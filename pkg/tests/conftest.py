import numpy as np
import pytest

from kwctv import JumpPenalty, Signal, certify

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def rho_pen():
    return JumpPenalty.rho_over_one_plus_rho()


@pytest.fixture(scope="session")
def cert1(rho_pen):
    return certify(rho_pen, 1.0)


@pytest.fixture
def ramp():
    return Signal.from_function(lambda x: x, 0.0, 1.0, 256, 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
