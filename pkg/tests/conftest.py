import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(42)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""

    def record(key, passed, text):
        line = f"criterion {key:<4s} {'PASS' if passed else 'FAIL'}  {text}"
        _ACCEPTANCE[key] = line
        print(line)
        return passed

    return record


def _order(key):
    head = key.rstrip("abcdefghijklmnopqrstuvwxyz")
    return int(head), key


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=_order):
        terminalreporter.write_line(_ACCEPTANCE[key])
