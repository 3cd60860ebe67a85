import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dissmhd.grid import Grid

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

CONFIG_DIR = Path(__file__).resolve().parent.parent / "src" / "dissmhd" / "scenarios" / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid8():
    return Grid((8, 8, 8))


@pytest.fixture
def grid_aniso():
    return Grid((6, 5, 7), (1.0, 0.8, 1.3), (0.1, -0.2, 0.0))


def random_face(grid, rng):
    return tuple(rng.standard_normal(grid.face_shape(c)) for c in range(3))


def random_edge(grid, rng):
    return tuple(rng.standard_normal(grid.edge_shape(c)) for c in range(3))


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line; printed now and again in the terminal summary."""

    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
