import numpy as np
import pytest

from cltlab.systems import DoublingMap, TentMap, ToralAutomorphism


@pytest.fixture(scope="session")
def doubling():
    return DoublingMap()


@pytest.fixture(scope="session")
def tent():
    return TentMap()


@pytest.fixture(scope="session")
def cat():
    return ToralAutomorphism([[2, 1], [1, 1]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(number, passed, detail)."""

    def record(number, passed, detail):
        line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE, key=str):
            terminalreporter.write_line(ACCEPTANCE[k])
