import functools

import pytest

from tsnbridge.cli import simulate
from tsnbridge.config import load_config

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def scenario_run(name: str, seed: int | None = None):
    """One simulation per (scenario, seed) for the whole session."""
    return simulate(load_config(name, seed=seed))


@pytest.fixture(scope="session")
def run_scenario():
    return scenario_run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
