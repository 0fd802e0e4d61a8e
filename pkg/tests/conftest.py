import math

import pytest
from hypothesis import HealthCheck, settings

from rpsde import problems

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def ex1():
    return problems.example1()


@pytest.fixture
def ex1_problem(ex1):
    return ex1.to_problem()


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")


PI = math.pi
