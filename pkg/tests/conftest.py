import numpy as np
import pytest

from paldp.weights import WeightSpec


@pytest.fixture
def plain():
    return WeightSpec.plain(1.0, 1.0)


@pytest.fixture
def two_color():
    """Colour-independent weights on two colours."""
    return WeightSpec.colored(("r", "b"), 1.0, 1.0)


@pytest.fixture
def colored():
    """Colour-dependent weights with c = 2 for every pair."""
    return WeightSpec.colored(("r", "b"), [1.0, 1.5, 0.5, 1.25], [1.0, 0.5, 1.5, 0.75])


@pytest.fixture
def mu2():
    return np.array([0.3, 0.7])


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
