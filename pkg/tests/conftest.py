import pytest

from pragmatic_speaker.taxonomy import load_taxonomy

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def tax():
    return load_taxonomy()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
