import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

# acceptance lines collected during the run, printed in the terminal summary
ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion.

    Usage: ``criterion(n, title, passed, detail)``; the line is printed
    immediately and repeated in the end-of-run summary.
    """

    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}" + (
            f" | {detail}" if detail else ""
        )
        ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_scenario():
    """A quick EPA scenario: a few hundred rows with both classes present."""
    from dataclasses import replace

    from rachml.simulator import DS1

    return replace(DS1, total_ues=600, n_raos=40, seed=3)


@pytest.fixture(scope="session")
def small_dataset(small_scenario):
    from rachml.simulator import run_scenario

    return run_scenario(small_scenario)


@pytest.fixture(scope="session")
def toy_classes():
    """Two overlapping log-normal feature clouds shaped like PDP bins."""
    r = np.random.default_rng(99)
    n = 400
    base = r.lognormal(-3.0, 1.0, size=(n, 24))
    y = (r.random(n) < 0.5).astype(np.int64)
    base[y == 1, 3:8] *= 6.0
    return base, y
