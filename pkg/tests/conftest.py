import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def verdict(request):
    """Record ``(criterion, passed, detail)`` for the end-of-run acceptance summary."""

    def record(criterion: int, passed: bool, detail: str) -> None:
        request.config.stash[ACCEPTANCE][criterion] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[ACCEPTANCE]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 9):
        if n not in results:
            terminalreporter.write_line(f"criterion {n}: NOT RUN")
            continue
        passed, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
