import sys
import numpy as np
import pytest

from driftflow.models import Likelihood


def table_likelihood(values):
    """Likelihood returning fixed values, one per particle, in order."""
    with np.errstate(divide="ignore"):
        logs = np.log(np.asarray(values, dtype=float))
    return Likelihood(lambda pts: logs[: len(pts)].copy(), "table")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.acceptance_lines():
        terminalreporter.write_line(line)
