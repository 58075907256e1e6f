import pytest

from pld.metrics import LinkConfig, Thresholds

# Criterion lines collected by test_acceptance.py and echoed in the summary.
ACCEPTANCE_LINES = []


@pytest.fixture
def surface_link():
    """P = 5 mW, Bob at 0 dB, Eve at -10 dB."""
    return LinkConfig.from_db(0.0, -10.0, 5.0)


@pytest.fixture
def path_link():
    """P = 5 mW, Bob at -5 dB, Eve at -15 dB."""
    return LinkConfig.from_db(-5.0, -15.0, 5.0)


@pytest.fixture
def t01():
    return Thresholds(throughput_min=0.1)


@pytest.fixture(autouse=True)
def _fixed_epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
