import sys

import pytest

from misinference import design, simulation as sim
from misinference.estimation import records_to_frame


@pytest.fixture(scope="session")
def small_designs():
    sessions = design.gen_sessions(40, seed=11)
    return [r for s in sessions for r in s.records()]


@pytest.fixture(scope="session")
def small_panel(small_designs):
    cfg = sim.PanelConfig(n_subjects=40, seed=11)
    return sim.run_panel(cfg, small_designs)


@pytest.fixture(scope="session")
def small_frame(small_panel):
    return records_to_frame(small_panel)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
