import numpy as np
import pytest

from freca.data import LabeledDataset

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n, d, c):
    return LabeledDataset(rng.standard_normal((n, d)), rng.integers(0, c, n), c)
