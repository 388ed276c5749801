import numpy as np
import pytest

from uepcount import CountCollection, LocalCountMap

ACCEPTANCE_LINES = []

# raw fixture collection used across modules: one background sample below t0
RAW_T = [0.00005, 0.2, 0.2, 0.4, 0.8, 1.6, 3.2]


@pytest.fixture
def raw_t():
    return CountCollection.from_values(RAW_T)


@pytest.fixture
def filtered_t():
    return CountCollection.from_values([0.2, 0.2, 0.4, 0.8, 1.6, 3.2])


@pytest.fixture
def raw_map():
    return LocalCountMap("fixture", 8, np.array([RAW_T]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
