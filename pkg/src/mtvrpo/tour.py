from __future__ import annotations

import math
from dataclasses import dataclass, field

from .geometry import Point


@dataclass
class Trajectory:
    """Piecewise-linear agent motion: knots are (x, y, t); claims are (target, window, time)."""

    knots: list[tuple[float, float, float]]
    claims: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def length(self) -> float:
        return sum(
            math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(self.knots, self.knots[1:])
        )

    def position(self, t: float) -> Point:
        ks = self.knots
        if t <= ks[0][2]:
            return ks[0][:2]
        for a, b in zip(ks, ks[1:]):
            if a[2] <= t <= b[2]:
                if b[2] - a[2] <= 0:
                    return b[:2]
                u = (t - a[2]) / (b[2] - a[2])
                return (a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1]))
        return ks[-1][:2]


@dataclass(eq=False)
class Tour:
    """Depot-to-depot sequence of target-window ids with cost bounds."""

    seq: tuple[int, ...]
    lb: float
    ub: float
    cost: float | None = None
    trajectory: Trajectory | None = None

    @property
    def evaluated(self) -> bool:
        return self.cost is not None

    def set_cost(self, cost: float, trajectory: Trajectory | None = None) -> None:
        self.cost = cost
        self.lb = self.ub = cost
        self.trajectory = trajectory

    def merge_bounds(self, lb: float, ub: float) -> None:
        if self.evaluated:
            return
        self.lb = max(self.lb, lb)
        self.ub = min(self.ub, ub)

    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.seq, self.seq[1:]))

    def __repr__(self):
        c = f", cost={self.cost:.6g}" if self.evaluated else ""
        return f"Tour({self.seq}, lb={self.lb:.6g}, ub={self.ub:.6g}{c})"
