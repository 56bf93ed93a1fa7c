import numpy as np
import pytest

from dpmkit import GaussianProblem, MixtureProblem, NoiseSchedule

MIX_WEIGHTS = [0.5, 0.3, 0.2]
MIX_MEANS = [[1.0, 0.5, -0.5, 0.0], [-1.0, 0.0, 0.5, 1.0], [0.0, -1.0, 0.0, -0.5]]
MIX_SCALES = [0.5, 0.7, 0.6]

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def lin():
    return NoiseSchedule.linear()


@pytest.fixture(scope="session")
def cos():
    return NoiseSchedule.cosine()


@pytest.fixture(scope="session")
def gauss():
    return GaussianProblem(np.array([0.5, -0.3, 0.8, 0.1]), 0.5)


@pytest.fixture(scope="session")
def mixture():
    return MixtureProblem(MIX_WEIGHTS, MIX_MEANS, MIX_SCALES)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
