import numpy as np
import pytest

from mmqueue import HyperExponential, make_model

TWO_STATE_Q = [[-1.0, 1.0], [2.0, -2.0]]

# collected by test_acceptance, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def two_state_model():
    services = [
        HyperExponential((0.25, 0.75), (1.0, 3.0)),
        HyperExponential((0.5, 0.5), (4.0 / 3.0, 4.0)),
    ]
    return make_model(TWO_STATE_Q, [0.9, 1.2], [1.0, 2.0], services)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
