import numpy as np
import pytest

from lnrobust.payments import GroundUpModel, frame

# acceptance criteria report one line each at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def ln142():
    return GroundUpModel(1.0, 4.0, 2.0)


@pytest.fixture
def fr_wide():
    return frame(3.0, 5.96e3, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
