import pytest

from metameans import diagnostics
from metameans.rng import RandomStream


@pytest.fixture
def stream():
    return RandomStream(12345)


@pytest.fixture(autouse=True)
def _clean_counters():
    diagnostics.reset()
    yield
    diagnostics.reset()


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
