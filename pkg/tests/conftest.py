import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from mlfrac.grid import SpectralGrid, StateField
from mlfrac.symbol import example_symbol

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="session")
def ml_reference():
    return json.loads((DATA / "ml_reference.json").read_text())


@pytest.fixture(scope="session")
def grid1d():
    return SpectralGrid((2 * math.pi,), (128,))


@pytest.fixture(scope="session")
def coupled_symbol():
    return example_symbol([1.0])


def gaussian_pair(grid: SpectralGrid) -> StateField:
    x = grid.x[0]
    return StateField(grid, np.stack([np.exp(-4 * x**2), 0.5 * np.exp(-4 * (x - 0.3) ** 2)]))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
