import os
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=int(os.environ.get("HYPOTHESIS_MAX_EXAMPLES", "60")),
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_CRITERIA: list[str] = []


@pytest.fixture
def criterion_report():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def report(number: int, passed: bool, text: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {text}"
        _CRITERIA.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def reference_run():
    """The reference preset, with snapshots every 100 steps; ``elapsed`` in seconds."""
    from vnfp.coupled import SimConfig, run_coupled

    start = time.perf_counter()
    traj = run_coupled(SimConfig(snapshot_every=100))
    traj.elapsed = time.perf_counter() - start
    return traj


@pytest.fixture
def exp_profile():
    return lambda q: np.exp(-np.asarray(q, dtype=float))
