import sys

import numpy as np
import pytest

from markov_sched.channel import MarkovChannel
from markov_sched.reward import default_model, make_estimation_model

DELTA = 0.2


@pytest.fixture
def pos_channel():
    return MarkovChannel(0.8, 0.2, DELTA)


@pytest.fixture
def neg_channel():
    return MarkovChannel(0.2, 0.8, DELTA)


@pytest.fixture
def model():
    return default_model(DELTA)


@pytest.fixture
def plain_model():
    return make_estimation_model(DELTA)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.report_line(num))
