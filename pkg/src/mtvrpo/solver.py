"""Depth-first branch-and-price with lazily evaluated tour costs."""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NoFractionalEdge
from .instance import DEPOT, Instance
from .master import INT_TOL, RMPSolution, solve_rmp
from .pricing import Pricer
from .problem import LAZY, MODES, NON_LAZY, Problem
from .seed import generate_feasible_solution
from .tour import Tour, Trajectory

OPTIMAL, INFEASIBLE, TIMEOUT = "OPTIMAL", "INFEASIBLE", "TIMEOUT"
PRUNE_TOL = 1e-6
ARTIFICIAL_COST = 1e5


@dataclass
class SolverConfig:
    mode: str = LAZY
    n_seg_tar: int = 6
    time_limit: float = 600.0
    threads: int = 1
    seed: int = 0
    max_tours_per_round: int = 50

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.time_limit > 0:
            raise ConfigError("time_limit must be positive")
        env = os.environ.get("MTVRPO_THREADS")
        if env:
            self.threads = int(env)


@dataclass
class SolvedTour:
    windows: list[tuple[int, int]]  # (target, window) per visit, depot excluded
    seq: tuple[int, ...]
    cost: float
    trajectory: Trajectory


@dataclass
class Solution:
    status: str
    tours: list[SolvedTour] = field(default_factory=list)
    total_cost: float = math.inf
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "total_cost": self.total_cost if math.isfinite(self.total_cost) else None,
            "tours": [
                {
                    "windows": [list(w) for w in t.windows],
                    "cost": t.cost,
                    "trajectory": [list(k) for k in t.trajectory.knots],
                    "claims": [
                        {"target": c[0], "window": c[1], "time": c[2]} for c in t.trajectory.claims
                    ],
                }
                for t in self.tours
            ],
            "stats": self.stats,
        }


class _Timeout(Exception):
    pass


class BranchAndPrice:
    def __init__(self, inst: Instance, config: SolverConfig | None = None):
        self.config = config or SolverConfig()
        self.t0 = time.perf_counter()
        self.inst = inst
        self.prob = Problem(inst, self.config.n_seg_tar, self.config.mode, self.config.threads)
        self.pricer = Pricer(self.prob, self.config.max_tours_per_round)
        self.pool: set[tuple[int, ...]] = set()
        self.incumbent: list[Tour] | None = None
        self.c_inc = math.inf
        self.nodes_expanded = 0
        self.pricing_rounds = 0
        self.inc_history: list[float] = []
        self.node_bounds: list[tuple[frozenset, float]] = []
        self.all_edges = sorted(self.prob.graph.lfdt.keys())

    # -- helpers

    def _check_time(self):
        if time.perf_counter() - self.t0 > self.config.time_limit:
            raise _Timeout

    def _add(self, tours: list[Tour]):
        for t in tours:
            if math.isfinite(t.lb):
                self.pool.add(t.seq)
        if self.config.mode == NON_LAZY:
            self._evaluate([t for t in tours if not t.evaluated])

    def _evaluate(self, tours: list[Tour]):
        for t in tours:
            self._check_time()
            for bad in self.prob.evaluate([t]):
                self.pool.discard(bad.seq)

    def _active(self, B) -> list[Tour]:
        out = []
        for seq in sorted(self.pool):
            t = self.prob.tours[seq]
            if not math.isfinite(t.lb):
                continue
            if any(e in B for e in zip(seq, seq[1:])):
                continue
            out.append(t)
        return out

    def _rmp(self, B, artificial: bool) -> RMPSolution | None:
        return solve_rmp(
            self._active(B),
            self.prob.target_of,
            self.prob.n_tar,
            self.inst.n_agt,
            artificial_cost=ARTIFICIAL_COST if artificial else None,
        )

    def _offer_incumbent(self, tours: list[Tour]):
        cost = sum(t.ub for t in tours)
        if cost < self.c_inc - 1e-12:
            self.c_inc = cost
            self.incumbent = list(tours)
            self.inc_history.append(cost)

    # -- column generation

    def column_generation(self, B) -> RMPSolution | None:
        seeded = False
        artificial = False
        while True:
            self._check_time()
            sol = self._rmp(B, artificial)
            if sol is None:
                if not seeded:
                    seeded = True
                    seed = generate_feasible_solution(self.prob, B, self.config.seed)
                    if seed is not None:
                        self._add(seed)
                        continue
                if not artificial:
                    artificial = True
                    continue
                return None
            if sol.integral:
                self._offer_incumbent(sol.selected())
            self.pricing_rounds += 1
            new = self.pricer.price(sol.duals, B, self.pool)
            new = [t for t in new if t.seq not in self.pool]
            if not new:
                break
            self._add(new)
        if sol.uses_artificial:
            return None
        return sol

    # -- branching

    def _forcing_set(self, e, edges) -> set:
        """Edges to disallow so that e carries every visit to its end targets. Besides the
        competing edges at e's own windows, the sibling windows of both targets are cut,
        otherwise a target split across its windows keeps the fractional point feasible."""
        a, b = e
        target_of = self.prob.target_of
        ta, tb = target_of(a), target_of(b)

        def sibling(x, tgt, own):
            return x != own and target_of(x) == tgt

        out = set()
        for u, v in edges:
            if a != DEPOT and ((u == a and v != b) or sibling(u, ta, a) or sibling(v, ta, a)):
                out.add((u, v))
            if b != DEPOT and ((v == b and u != a) or sibling(u, tb, b) or sibling(v, tb, b)):
                out.add((u, v))
        return out

    def generate_successors(self, B: frozenset, sol: RMPSolution):
        flow: dict[tuple[int, int], float] = {}
        for t, th in zip(sol.tours, sol.theta):
            if th <= INT_TOL:
                continue
            for e in t.edges():
                flow[e] = flow.get(e, 0.0) + th
        cands = []
        for e, f in flow.items():
            if abs(f - round(f)) <= INT_TOL:
                continue
            force = self._forcing_set(e, self.all_edges)
            if e in B or force <= B:
                continue
            cands.append((abs(f - 0.5), e, force))
        if cands:
            _, e, force = min(cands)
            return B | {e}, B | force
        # every fractional edge is already forced: split on which window serves a target
        wflow: dict[int, float] = {}
        for t, th in zip(sol.tours, sol.theta):
            if th <= INT_TOL:
                continue
            for u in t.seq[1:-1]:
                wflow[u] = wflow.get(u, 0.0) + th
        for i in range(1, self.prob.n_tar + 1):
            ws = [w for w in self.prob.graph.windows_of[i] if wflow.get(w, 0.0) > INT_TOL]
            if len(ws) >= 2:
                g = ws[0]
                others = [w for w in self.prob.graph.windows_of[i] if w != g]
                ban_g = {e for e in self.all_edges if g in e}
                ban_rest = {e for e in self.all_edges if e[0] in others or e[1] in others}
                return B | ban_g, B | ban_rest
        raise NoFractionalEdge("fractional master solution without a branching candidate")

    # -- main loop

    def run(self) -> Solution:
        status = OPTIMAL
        try:
            if self.prob.n_tar == 0:
                return self._finish(OPTIMAL, [])
            seed = generate_feasible_solution(self.prob, frozenset(), self.config.seed)
            if seed is not None:
                self._add(seed)
                if all(math.isfinite(t.ub) for t in seed):
                    self._offer_incumbent(seed)
            self._branch_and_bound()
        except _Timeout:
            status = TIMEOUT
        if self.incumbent is None:
            return self._finish(INFEASIBLE if status == OPTIMAL else TIMEOUT, [])
        return self._finish(status, self.incumbent)

    def _branch_and_bound(self):
        stack: list[tuple[frozenset, float]] = [(frozenset(), 0.0)]
        while stack:
            self._check_time()
            B, lb = stack.pop()
            if lb >= self.c_inc - PRUNE_TOL:
                continue
            self.nodes_expanded += 1
            while True:
                sol = self.column_generation(B)
                if sol is None or sol.objective >= self.c_inc - PRUNE_TOL:
                    break
                self.node_bounds.append((B, sol.objective))
                if sol.integral:
                    sel = sol.selected()
                    todo = [t for t in sel if not t.evaluated]
                    if not todo:
                        self._offer_incumbent(sel)
                        break
                    self._evaluate(todo)
                    continue
                b1, b2 = self.generate_successors(B, sol)
                stack.append((frozenset(b1), sol.objective))
                stack.append((frozenset(b2), sol.objective))
                break

    def _finish(self, status: str, tours: list[Tour]) -> Solution:
        # incumbent tours may still carry only upper bounds; give them exact costs
        todo = [t for t in tours if not t.evaluated]
        if todo:
            self.prob.evaluate(todo)
            if any(not t.evaluated for t in todo):
                status, tours = INFEASIBLE if status == OPTIMAL else status, []
        out = _dedupe_claims(self.prob, tours)
        total = float(sum(t.cost for t in out))
        if status == INFEASIBLE or (status == TIMEOUT and not tours):
            total = math.inf
        stats = {
            "nodes": self.nodes_expanded,
            "tours_evaluated": len(self.prob.evaluations),
            "pricing_rounds": self.pricing_rounds,
            "gcs_queries": self.prob.gcs_queries,
            "wall_time": time.perf_counter() - self.t0,
            "pool_size": len(self.pool),
            "pricing_fallbacks": self.pricer.fallback_runs,
        }
        return Solution(status, out, total, stats)


def _dedupe_claims(prob: Problem, tours: list[Tour]) -> list[SolvedTour]:
    """A target served by several selected tours keeps only the claim of the cheapest one."""
    owner: dict[int, int] = {}
    order = sorted(range(len(tours)), key=lambda k: (tours[k].cost, tours[k].seq))
    for k in order:
        for u in tours[k].seq:
            i = prob.target_of(u)
            if i and i not in owner:
                owner[i] = k
    out = []
    for k, t in enumerate(tours):
        traj = t.trajectory
        claims = [c for c in traj.claims if owner.get(c[0]) == k]
        out.append(
            SolvedTour(
                windows=[(prob.nodes[u].target, prob.nodes[u].window) for u in t.seq[1:-1]],
                seq=t.seq,
                cost=float(t.cost),
                trajectory=Trajectory(list(traj.knots), claims),
            )
        )
    return out


def solve(inst: Instance, config: SolverConfig | None = None) -> Solution:
    return BranchAndPrice(inst, config).run()
