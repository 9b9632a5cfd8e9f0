import pytest

from starkecho.analysis import run
from starkecho.sequence import preset


@pytest.fixture(scope="session")
def traces():
    """Full-ensemble exact runs of the stock sequences, computed once."""
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run(preset(name))
        return cache[name]

    return get


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
