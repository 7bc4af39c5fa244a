import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stablelike.kernels import KernelBounds, Modulated, kernel_from_spec

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def std1():
    return kernel_from_spec({"family": "standard", "d": 1, "alpha": 1.0})


@pytest.fixture(scope="session")
def modulated():
    return Modulated(KernelBounds(1, 1.0, 0.5), a=0.3)


@pytest.fixture
def origin():
    return np.zeros(1)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
