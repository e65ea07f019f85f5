import numpy as np
import pytest
from hypothesis import settings

from stochrecon import Grid, ScalingVector, build_basis

settings.register_profile("repo", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def db2():
    return build_basis("daubechies", 2)


@pytest.fixture(scope="session")
def db3():
    return build_basis("daubechies", 3)


@pytest.fixture(scope="session")
def haar():
    return build_basis("haar")


@pytest.fixture
def line_grid():
    return Grid([0.0], [4.0], 10)


@pytest.fixture
def S1():
    return ScalingVector([1])


def rel(a, b):
    return float(np.abs(a - b) / np.abs(b))


ACCEPTANCE = []


def record(criterion, ok, detail):
    """Store one acceptance verdict for the terminal summary."""
    line = f"{criterion}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
