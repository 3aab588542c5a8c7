import numpy as np
import pytest

from emcdma.ira import build_code


@pytest.fixture(scope="session")
def code_2000():
    return build_code(1000, 2000, seed=7)


@pytest.fixture(scope="session")
def code_2200():
    return build_code(1000, 2200, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
