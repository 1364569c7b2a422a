import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

from wsnadapt import sim

_CRITERIA: list[tuple[int, str, bool]] = []


def record_criterion(number: int, description: str, passed: bool) -> None:
    """Collect one acceptance-criterion verdict for the session summary."""
    _CRITERIA.append((number, description, passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, passed in sorted(_CRITERIA):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}: criterion {number:2d} - {description}")


@pytest.fixture(scope="session")
def default_scenario():
    return sim.default_scenario()


@pytest.fixture(scope="session")
def default_cov(default_scenario):
    from wsnadapt.fieldgen import build_spatial_covariance

    return build_spatial_covariance(default_scenario.layout, default_scenario.field)
