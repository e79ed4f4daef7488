import numpy as np
import pytest

from fairtest.projection import ProjectionProblem


@pytest.fixture
def hand_problem():
    # phi=(2,-2,2,-2), C=(1,0,0,0), d=(0.5,1,2,0.1): one row of cost 0.1 fixes the imbalance
    return ProjectionProblem(d=[0.5, 1.0, 2.0, 0.1], c=[1, 0, 0, 0], phi=[2.0, -2.0, 2.0, -2.0])


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
