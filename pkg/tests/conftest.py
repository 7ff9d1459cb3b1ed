import math

import numpy as np
import pytest
from hypothesis import settings

from viscidlab.grid import make_grid

settings.register_profile("viscidlab", deadline=None, max_examples=25)
settings.load_profile("viscidlab")


@pytest.fixture
def grid64():
    return make_grid(64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TWO_PI = 2 * math.pi


_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict line and return whether it passed."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
