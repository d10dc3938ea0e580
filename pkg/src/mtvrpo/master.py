"""Restricted master LP over the current tour pool."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import NotIntegral
from .tour import Tour

INT_TOL = 1e-6


@dataclass
class Duals:
    lam0: float  # agent-count dual, <= 0
    lam: np.ndarray  # coverage duals for targets 1..n_tar, >= 0

    def target(self, i: int) -> float:
        return 0.0 if i == 0 else float(self.lam[i - 1])


@dataclass
class RMPSolution:
    tours: list[Tour]
    theta: np.ndarray
    objective: float
    duals: Duals
    artificial: np.ndarray  # per-target artificial coverage (zeros when not used)

    @property
    def integral(self) -> bool:
        th = self.theta
        return bool(np.all(np.minimum(np.abs(th), np.abs(th - 1.0)) <= INT_TOL)) and not self.uses_artificial

    @property
    def uses_artificial(self) -> bool:
        return bool(np.any(self.artificial > INT_TOL))

    def selected(self) -> list[Tour]:
        return [t for t, v in zip(self.tours, self.theta) if v > 0.5]


def coverage_matrix(tours: list[Tour], target_of, n_tar: int) -> np.ndarray:
    a = np.zeros((n_tar, len(tours)))
    for k, t in enumerate(tours):
        for u in t.seq:
            i = target_of(u)
            if i:
                a[i - 1, k] = 1.0
    return a


def solve_rmp(
    tours: list[Tour],
    target_of,
    n_tar: int,
    n_agt: int,
    use_lower_bounds: bool = True,
    artificial_cost: float | None = None,
) -> RMPSolution | None:
    """Min-cost fractional cover of all targets by at most n_agt tours; None if infeasible.

    With ``artificial_cost`` each target also gets a slack column of that cost which
    covers it without using an agent, so the LP is always feasible.
    """
    cost = np.array([t.lb if use_lower_bounds else t.ub for t in tours], dtype=float)
    alpha = coverage_matrix(tours, target_of, n_tar)
    n_art = n_tar if artificial_cost is not None else 0
    c = np.concatenate([cost, np.full(n_art, artificial_cost or 0.0)])
    cover = np.hstack([alpha, np.eye(n_tar)[:, :n_art]])
    agents = np.concatenate([np.ones(len(tours)), np.zeros(n_art)])
    if len(c) == 0:
        return None
    A = np.vstack([-cover, agents[None, :]])
    b = np.concatenate([-np.ones(n_tar), [n_agt]])
    res = linprog(c, A_ub=A, b_ub=b, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        return None
    marg = res.ineqlin.marginals
    duals = Duals(lam0=float(min(marg[-1], 0.0)), lam=np.maximum(-marg[:n_tar], 0.0))
    x = res.x
    return RMPSolution(list(tours), x[: len(tours)], float(res.fun), duals, x[len(tours) :])


def extract_tours(sol: RMPSolution) -> list[Tour]:
    if not sol.integral:
        raise NotIntegral("RMP solution is fractional")
    return sol.selected()

