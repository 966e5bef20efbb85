from __future__ import annotations

import numpy as np
import pytest

from landmatch.synth import ShotConfig, fire_with_truth, make_barrel

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def barrel():
    return make_barrel("fixture-barrel", seed=11)


@pytest.fixture(scope="session")
def shots(barrel):
    """Two bullets from one barrel, both with the identity land order."""
    a, ta = fire_with_truth(barrel, ShotConfig(seed=1), "A")
    b, tb = fire_with_truth(barrel, ShotConfig(seed=2), "B")
    return a, ta, b, tb


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
