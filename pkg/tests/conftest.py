import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(pytestconfig):
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""
    lines = pytestconfig.stash.setdefault(_CRITERIA, {})

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        lines[number] = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        print(lines[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
