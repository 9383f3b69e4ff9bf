import numpy as np
import pytest
from hypothesis import settings

from yamabe_blowup.weyl import HField, canonical_weyl

# derandomized so reruns are reproducible; numerical examples can be slow
settings.register_profile("repo", derandomize=True, deadline=None, max_examples=40,
                          print_blob=True)
settings.load_profile("repo")

TAU0_N25 = -7.040728686322099


@pytest.fixture(scope="session")
def H25():
    return HField(TAU0_N25, canonical_weyl(25))


@pytest.fixture(scope="session")
def H6():
    return HField(1.0, canonical_weyl(6))


@pytest.fixture(scope="session")
def H5():
    return HField(1.0, canonical_weyl(5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
