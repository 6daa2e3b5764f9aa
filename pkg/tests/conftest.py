import numpy as np
import pytest
from hypothesis import settings

from vpopt.phase_space import PhaseGrid, focusing_scenario, two_stream_scenario

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    return PhaseGrid(16, 12, 0.0, 2 * np.pi, -3.0, 3.0)


@pytest.fixture(scope="session")
def focusing():
    return focusing_scenario()


@pytest.fixture(scope="session")
def two_stream():
    return two_stream_scenario()


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion; returns the boolean."""

    def record(number: int, label: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {label}: {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
