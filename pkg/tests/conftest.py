import numpy as np
import pytest

from saddle_exit import Ball, spectral_data
from saddle_exit.models import registry_model


@pytest.fixture(scope="session")
def linear():
    m = registry_model("linear-saddle", Ball(1.0, dim=2))
    return m, spectral_data(m)


@pytest.fixture(scope="session")
def cubic():
    m = registry_model("cubic-saddle", Ball(0.5, dim=2))
    return m, spectral_data(m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
