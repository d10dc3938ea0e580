"""Shared per-instance state: geometry, kinematics, target-window graph, segment data,
the global tour pool and the tour-cost evaluator."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

from .bounds import SegmentData, compute_tmax
from .errors import TourInfeasible
from .gcs import evaluate_tour
from .instance import DEPOT, Instance, build_tw_graph
from .kinematics import Kinematics
from .tour import Tour

LAZY, NON_LAZY, NO_AFFINE = "lazy", "non_lazy", "no_affine_heuristic"
MODES = (LAZY, NON_LAZY, NO_AFFINE)


class Problem:
    def __init__(self, inst: Instance, n_seg_tar: int = 6, mode: str = LAZY, threads: int = 1):
        self.inst = inst
        self.world = inst.world
        self.mode = mode
        self.kin = Kinematics(self.world, inst.v_max)
        self.graph = build_tw_graph(inst, self.kin)
        self.segs = SegmentData(inst, self.graph, n_seg_tar)
        self.segs.precompute()
        self.nodes = self.graph.nodes
        self.n_tar = inst.n_tar
        self.threads = max(1, threads)
        self.tours: dict[tuple[int, ...], Tour] = {}
        self.gcs_queries = 0
        self.gcs_solves = 0
        self.evaluations: list[tuple[Tour, float, float]] = []  # (tour, lb, ub) before evaluation
        self.pop_traces: list[list[float]] = []

    # -- tour helpers

    def target_of(self, u: int) -> int:
        return self.nodes[u].target

    def targets(self, seq) -> list[int]:
        return [self.nodes[u].target for u in seq if u != DEPOT]

    def demand(self, seq) -> float:
        return sum(self.inst.demand(i) for i in self.targets(seq))

    def chain_feasible(self, seq) -> bool:
        """Sequential earliest arrivals stay inside every window (and capacity holds)."""
        if self.demand(seq) > self.inst.d_max + 1e-9:
            return False
        t = 0.0
        for u, v in zip(seq, seq[1:]):
            if t > self.graph.lfdt[(u, v)] + 1e-12:
                return False
            t = self.kin.efat(self.nodes[u], self.nodes[v], t)
            if t is None:
                return False
        return True

    def make_tour(self, seq, lb: float | None = None, ub: float | None = None) -> Tour:
        """Registered tour for seq with relaxed-continuity bounds (merged if already known)."""
        seq = tuple(seq)
        if lb is None:
            lb = self.segs.tour_lower_bound(seq)
        if ub is None:
            ub = self.segs.tour_upper_bound(seq)
        t = self.tours.get(seq)
        if t is None:
            t = Tour(seq, lb, max(ub, lb))
            self.tours[seq] = t
        else:
            t.merge_bounds(lb, ub)
        return t

    # -- exact evaluation

    def _evaluate_one(self, tour: Tour):
        seq = tour.seq
        path = [self.nodes[u] for u in seq]
        tmax = compute_tmax(seq, self.graph, self.kin)
        heur = None if self.mode == NO_AFFINE else self.segs.fit_affine_heuristic(seq)
        return evaluate_tour(self.world, self.inst.v_max, path, tmax, heur)

    def evaluate(self, tours: list[Tour]) -> list[Tour]:
        """Exact costs for unevaluated tours; returns tours found unexecutable. Those stay
        registered with infinite bounds so pricing never offers them again."""
        todo = [t for t in tours if not t.evaluated]
        if not todo:
            return []
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                results = list(ex.map(self._safe_eval, todo))
        else:
            results = [self._safe_eval(t) for t in todo]
        bad = []
        for t, res in zip(todo, results):
            self.gcs_queries += 1
            if res is None:
                bad.append(t)
                t.lb = t.ub = math.inf
                continue
            self.gcs_solves += res.solves
            self.pop_traces.append(res.popped_f)
            self.evaluations.append((t, t.lb, t.ub))
            t.set_cost(res.cost, res.trajectory)
        return bad

    def _safe_eval(self, tour: Tour):
        try:
            return self._evaluate_one(tour)
        except TourInfeasible:
            return None
