import numpy as np
import pytest

from fdpwave.wavelets import build_basis


@pytest.fixture(scope="session")
def haar():
    return build_basis("haar")


@pytest.fixture(scope="session")
def db2():
    return build_basis("daubechies", 2)


@pytest.fixture(scope="session")
def db3():
    return build_basis("daubechies", 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
