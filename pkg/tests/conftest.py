import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import ACCEPTANCE_LINES, random_history  # noqa: E402


class Histories(list):
    """Histories plus the wall time spent generating them."""

    elapsed: float = 0.0


@pytest.fixture(scope="session")
def histories():
    """The 200 randomized histories shared by the acceptance criteria."""
    t0 = time.perf_counter()
    out = Histories(random_history(seed) for seed in range(200))
    out.elapsed = time.perf_counter() - t0
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
