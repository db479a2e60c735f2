import numpy as np
import pytest

from hybridbf.channel import DESK_CONFIG, sample_channel
from hybridbf.svd import gc_svd

# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE_LINES = []


@pytest.fixture
def desk_channel():
    return sample_channel(np.random.default_rng(7), DESK_CONFIG)


@pytest.fixture
def desk_svd(desk_channel):
    return gc_svd(desk_channel)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
