import pytest

from iwiplam.fixtures import coincidence_pair, f3_example, three_loop_example, z3_example
from iwiplam.lamination import LaminationSampler

# criterion number -> (passed, detail), filled by tests/test_acceptance.py
CRITERIA = {}


def record(number: int, title: str, passed: bool, detail: str = ""):
    CRITERIA[number] = (title, passed, detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        title, passed, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if passed else 'FAIL'}  {title}  {detail}")


@pytest.fixture(scope="session")
def z3():
    return z3_example()


@pytest.fixture(scope="session")
def f3():
    return f3_example()


@pytest.fixture(scope="session")
def three_loop():
    return three_loop_example()


@pytest.fixture(scope="session")
def z3_sampler(z3):
    return LaminationSampler(z3.maps["phi"])


@pytest.fixture(scope="session")
def f3_sampler(f3):
    return LaminationSampler(f3.maps["phi"])


@pytest.fixture(scope="session")
def z3_pair(z3):
    graph, f, h = coincidence_pair(z3)
    return graph, f, h, LaminationSampler(f)
