import numpy as np
import pytest

TOY = np.array([2.0, 6.0, 11.0, 10.0, 7.0, 1.0, 6.5, 7.0])


@pytest.fixture
def toy():
    return TOY.copy()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
