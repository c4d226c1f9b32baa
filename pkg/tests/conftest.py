import warnings

import pytest

from toralfold.dynamics import example_map

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def linear():
    return example_map(0.0)


@pytest.fixture(scope="session")
def perturbed():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return example_map(0.05)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
