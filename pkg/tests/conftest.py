import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from newton_admm import kernels  # noqa: E402


@pytest.fixture(params=kernels.available())
def backend(request):
    """Run the test once per importable kernel backend."""
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
