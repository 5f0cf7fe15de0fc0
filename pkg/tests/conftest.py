import numpy as np
import pytest
from hypothesis import settings

from spectral_sed.basis import BasisSpec, BoxDomain

settings.register_profile("ci", max_examples=30, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def unit_interval():
    return BoxDomain((0.0,), (1.0,))


@pytest.fixture
def square():
    return BoxDomain((-1.0, -1.0), (1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def spec2(square):
    return BasisSpec(square, (8, 8))


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
