import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from grace.backend import SimulatedBackend  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def sim():
    return SimulatedBackend()


@pytest.fixture(scope="session")
def train_corpus(sim):
    return sim.corpus("train")


@pytest.fixture(scope="session")
def test_corpus(sim):
    return sim.corpus("test")


@pytest.fixture
def fresh_sim():
    # own memo table, for evaluation-count audits
    return SimulatedBackend()


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
