import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("repo", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def backend():
    """Run a test under a chosen kernel backend and restore the previous one."""
    from ccpp import _kernels
    prev = _kernels.backend()
    yield _kernels.use_backend
    _kernels.use_backend(prev)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record and print one verdict line per acceptance criterion."""
    def emit(criterion, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
