import numpy as np
import pytest

from gsa.data import resolve_catalog
from gsa.simulation import generate_scenario, preset


@pytest.fixture(scope="session")
def example1():
    matrix, catalog = generate_scenario(preset("example1", seed=11))
    return matrix, resolve_catalog(catalog, matrix)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
