import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from manoma.channel import sample_scenario
from manoma.config import config_from_dict
from manoma.stochastic import RngStream

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def desk_cfg():
    return config_from_dict(None, "desk")


@pytest.fixture
def desk_scenario(desk_cfg):
    return sample_scenario(desk_cfg, RngStream(11, (0,)))


def random_channel(rng, n, k, scale=1.0):
    return scale * (rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))) / np.sqrt(2)


def random_decoding(rng, k):
    m = np.eye(k, dtype=np.int8)
    iu = np.triu_indices(k, 1)
    m[iu] = rng.integers(0, 2, size=len(iu[0]))
    return m


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
