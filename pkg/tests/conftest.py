import pytest

from etclab.hybridsim import simulate
from etclab.systems import build_scenario


@pytest.fixture(scope="session")
def ex1():
    sc = build_scenario("example1")
    return sc, simulate(sc)


@pytest.fixture(scope="session")
def ex2():
    sc = build_scenario("example2")
    return sc, simulate(sc)


@pytest.fixture(scope="session")
def robust():
    sc = build_scenario("robust")
    return sc, simulate(sc)


@pytest.fixture(scope="session")
def scalar_t1():
    sc = build_scenario("scalar_event")
    return sc, simulate(sc)


@pytest.fixture(scope="session")
def scalar_masp():
    sc = build_scenario("scalar_masp")
    return sc, simulate(sc)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    lines = test_acceptance.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
