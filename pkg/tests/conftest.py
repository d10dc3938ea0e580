import math

import numpy as np
import pytest

from mtvrpo.geometry import ObstacleMap
from mtvrpo.instance import Instance, Target, Window


def grid_map(rows: list[str], cell: float = 1.0) -> ObstacleMap:
    """rows[0] is the bottom row; '@' marks a blocked cell."""
    blocked = np.array([[ch == "@" for ch in r] for r in rows], dtype=bool)
    h, w = blocked.shape
    return ObstacleMap(w, h, cell, blocked)


def free_map(n: int = 10, cell: float = 1.0) -> ObstacleMap:
    return grid_map(["." * n] * n, cell)


def stationary(p, t_lo: float, t_hi: float) -> Window:
    return Window(float(t_lo), float(t_hi), (float(p[0]), float(p[1])), (0.0, 0.0))


def moving(p, v, t_lo: float, t_hi: float) -> Window:
    return Window(float(t_lo), float(t_hi), (float(p[0]), float(p[1])), (float(v[0]), float(v[1])))


def make_instance(omap, depot, windows_per_target, n_agt=1, d_max=None, v_max=4.0) -> Instance:
    targets = tuple(Target(1.0, tuple(ws)) for ws in windows_per_target)
    if d_max is None:
        d_max = float(max(1, math.ceil(len(targets) / n_agt)))
    return Instance(omap, (float(depot[0]), float(depot[1])), float(v_max), float(d_max), int(n_agt), targets)


# 6x6 map with a wall in column 3 from the bottom up to row 3, open above
WALL_ROWS = [
    "...@..",
    "...@..",
    "...@..",
    "...@..",
    "......",
    "......",
]


@pytest.fixture
def wall_map():
    return grid_map(WALL_ROWS)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
