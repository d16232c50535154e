import numpy as np
import pytest

from zshift import cases, freqresp as fr, network as nw


@pytest.fixture(scope="session")
def case_net():
    return cases.load_case("case_study")


@pytest.fixture(scope="session")
def passive_net():
    return cases.load_case("passive")


@pytest.fixture(scope="session")
def grid31():
    return fr.make_log_grid(1.0, 1000.0, 31)


@pytest.fixture(scope="session")
def case_analysis(case_net, grid31):
    return nw.analyze(case_net, grid31)


@pytest.fixture
def rng():
    return np.random.default_rng(20260111)


def random_response(rng, n=8, domain=fr.Domain.DQ, frame=fr.Frame("N1")):
    grid = fr.make_log_grid(1.0, 1000.0, n)
    vals = rng.normal(size=(n, 2, 2)) + 1j * rng.normal(size=(n, 2, 2))
    return fr.FrequencyResponse2x2(grid, vals, domain, frame, fr.Kind.IMPEDANCE)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
