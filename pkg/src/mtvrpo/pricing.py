"""Labeling search for tours with negative reduced cost under the master duals.

A label is a partial tour summarized by its last target-window, earliest execution
time, served demand, a bitmask of targets it may no longer visit, and per-segment
upper and lower bounds on the cost of reaching each segment of the last window.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .instance import DEPOT
from .master import Duals
from .problem import NON_LAZY, Problem
from .tour import Tour

RED_TOL = 1e-4
MAX_TOURS = 50


@dataclass(eq=False)
class Label:
    node: int
    t: float
    sigma: float
    b: int
    g_ub: np.ndarray
    g_lb: np.ndarray
    lam: float
    seq: tuple[int, ...]
    discarded: bool = False


def reduced_cost_lb(lb: float, seq, duals: Duals, target_of) -> float:
    return lb - sum(duals.target(target_of(u)) for u in seq if u != DEPOT) - duals.lam0


def dominates(l: Label, m: Label, delta: np.ndarray, check_time: bool = True) -> bool:
    """True when l's best completion is provably no worse than m's (same window)."""
    if l.node == DEPOT:
        return l.g_ub[0] - l.lam <= m.g_lb[0] - m.lam
    if l.sigma > m.sigma or (l.b & ~m.b):
        return False
    if check_time and l.t > m.t:
        return False
    return bool(np.all(l.g_ub + delta - l.lam <= m.g_lb - m.lam))


class Pricer:
    def __init__(self, prob: Problem, max_tours: int = MAX_TOURS):
        self.prob = prob
        self.max_tours = max_tours
        g = prob.graph
        self.nodes = g.nodes
        self.n_tar = prob.n_tar
        self.d_max = prob.inst.d_max
        self.dem = [prob.inst.demand(i) for i in range(self.n_tar + 1)]
        self.delta = prob.segs.delta
        self.succ = {u.id: g.successors(u.id) for u in g.nodes}
        self.windows_of = g.windows_of
        self.lfdt = g.lfdt
        self.labels_created = 0
        self.fallback_runs = 0

    # -- bitmask bookkeeping

    def _blocked_bits(self, node: int, t: float, sigma: float, b: int) -> int:
        for i in range(1, self.n_tar + 1):
            bit = 1 << (i - 1)
            if b & bit:
                continue
            if sigma + self.dem[i] > self.d_max + 1e-9 or all(
                t > self.lfdt[(node, w)] for w in self.windows_of[i] if self.nodes[w].target != self.nodes[node].target
            ):
                b |= bit
        return b

    def _root(self, duals: Duals) -> Label:
        b = self._blocked_bits(DEPOT, 0.0, 0.0, 0)
        return Label(DEPOT, 0.0, 0.0, b, np.zeros(1), np.zeros(1), duals.lam0, (DEPOT,))

    def _extend(self, l: Label, v: int, duals: Duals) -> Label | None:
        prob = self.prob
        u = l.node
        i = self.nodes[v].target
        t2 = prob.kin.efat(self.nodes[u], self.nodes[v], l.t)
        if t2 is None:
            return None
        g_lb = prob.segs.relax(l.g_lb, prob.segs.cseg(u, v))
        if not np.isfinite(g_lb).any():
            return None
        g_ub = prob.segs.relax(l.g_ub, prob.segs.cstart(u, v))
        sigma = l.sigma + self.dem[i]
        if i == DEPOT:
            return Label(v, t2, sigma, l.b, g_ub, g_lb, l.lam, l.seq + (v,))
        b = self._blocked_bits(v, t2, sigma, l.b | (1 << (i - 1)))
        return Label(v, t2, sigma, b, g_ub, g_lb, l.lam + duals.target(i), l.seq + (v,))

    def _bound(self, l: Label, duals: Duals) -> float:
        """Lower bound on the reduced cost of any completion of l."""
        free = sum(
            duals.target(i) for i in range(1, self.n_tar + 1) if not l.b & (1 << (i - 1))
        )
        return float(l.g_lb.min()) - l.lam - free

    # -- main loop

    def price(self, duals: Duals, B=frozenset(), pool=frozenset()) -> list[Tour]:
        """Up to ``max_tours`` tours outside ``pool`` with reduced cost below -1e-4."""
        found, trigger = self._run(duals, B, pool, partial_dominance=True)
        if not found and trigger:
            # a negative relaxed tour that was not emitted may have pruned, through
            # partial-label dominance, siblings that would be; redo without it
            self.fallback_runs += 1
            found, _ = self._run(duals, B, pool, partial_dominance=False)
        found.sort(key=lambda x: (x[0], x[1]))
        out = []
        for red, seq, lb, ub in found[: self.max_tours]:
            out.append(self.prob.make_tour(seq, lb, ub))
        return out

    def _run(self, duals: Duals, B, pool, partial_dominance: bool):
        prob = self.prob
        non_lazy = prob.mode == NON_LAZY
        tie = itertools.count()
        buckets: dict[int, list[Label]] = {u.id: [] for u in self.nodes}
        root = self._root(duals)
        heap = [(0.0, 0.0, 0.0, next(tie), root)]
        found: dict[tuple, tuple] = {}
        trigger = False

        while heap:
            *_, l = heapq.heappop(heap)
            if l.discarded:
                continue
            for v in self.succ[l.node]:
                if (l.node, v) in B:
                    continue
                i = self.nodes[v].target
                if l.t > self.lfdt[(l.node, v)]:
                    continue
                if l.sigma + self.dem[i] > self.d_max + 1e-9:
                    continue
                if i != DEPOT and l.b & (1 << (i - 1)):
                    continue
                m = self._extend(l, v, duals)
                self.labels_created += 1
                if m is None:
                    continue
                if i == DEPOT:
                    trigger |= self._at_depot(m, buckets[DEPOT], duals, found, pool, non_lazy)
                    continue
                if self._bound(m, duals) >= -RED_TOL:
                    continue
                if partial_dominance:
                    bucket = buckets[v]
                    d = self.delta[v]
                    if any(dominates(e, m, d) for e in bucket):
                        continue
                    keep = []
                    for e in bucket:
                        if dominates(m, e, d):
                            e.discarded = True
                        else:
                            keep.append(e)
                    keep.append(m)
                    buckets[v] = keep
                heapq.heappush(heap, (m.t, m.sigma, float(m.g_lb.min()), next(tie), m))
        return list(found.values()), trigger

    def _at_depot(self, m: Label, bucket: list[Label], duals: Duals, found: dict, pool, non_lazy: bool) -> bool:
        """Handle a completed-tour label. Returns True when the label's relaxed reduced
        cost is negative but its tour is not emitted (already pooled, or its exact cost
        removed the negativity)."""
        prob = self.prob
        d = self.delta[DEPOT]
        if any(dominates(e, m, d) for e in bucket):
            return False
        chain_red = float(m.g_lb[0]) - m.lam
        known = prob.tours.get(m.seq)
        if known is not None and not math.isfinite(known.lb):
            return False  # found unexecutable earlier
        if non_lazy:
            tour = prob.tours.get(m.seq)
            if tour is None or not tour.evaluated:
                tour = prob.make_tour(m.seq, float(m.g_lb[0]), float(m.g_ub[0]))
                prob.evaluate([tour])
                if not tour.evaluated:
                    return False
            m.g_lb = m.g_ub = np.array([tour.cost])
            if any(dominates(e, m, d) for e in bucket):
                return chain_red < -RED_TOL
        bucket[:] = [e for e in bucket if not dominates(m, e, d)] + [m]
        red = float(m.g_lb[0]) - m.lam
        if red < -RED_TOL and m.seq not in pool:
            found[m.seq] = (red, m.seq, float(m.g_lb[0]), float(m.g_ub[0]))
            return False
        return chain_red < -RED_TOL
