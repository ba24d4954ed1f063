import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cfrs.instance import Instance

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_instance(coords, demands, capacity=50):
    return Instance(coords=np.asarray(coords, dtype=float), demands=np.asarray(demands), capacity=capacity)


@pytest.fixture
def square_pairs():
    """Two far-apart customer pairs, demand 25 each."""
    return make_instance([[0.5, 0.5], [0.0, 0.0], [0.05, 0.0], [1.0, 1.0], [1.0, 0.95]], [25, 25, 25, 25])


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
