import os
from pathlib import Path

import pytest

from singpow import harness
from singpow import laplace_svd as ls

ROOT = Path(__file__).resolve().parents[1]
CACHE = Path(os.environ.get(harness.CACHE_ENV) or ROOT / ".singpow_cache")

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(line: str) -> None:
    """Collect an acceptance verdict for the end-of-run summary."""
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def workspace():
    return harness.Workspace(CACHE)


@pytest.fixture(scope="session")
def system10(workspace):
    """Full-depth singular system for [1, 10] and its N_max (=28)."""
    return workspace.system(10.0)


@pytest.fixture(scope="session")
def small_svd():
    """Cheap system for unit tests: [1, 10], 13 singular functions."""
    return ls.build(ls.Band(1, 10), 12, 60, 200, check_convergence=False)
