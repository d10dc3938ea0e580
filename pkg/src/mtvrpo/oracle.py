"""Brute-force reference solver for small instances.

Enumerates every executable tour, keeps the cheapest tour per visited target set and
picks the cheapest partition of the targets into at most n_agt such sets. Tour costs
come from the same convex-set search as the main solver (run with the multi-leg
interception completion); everything above the single-tour level is independent.
"""

from __future__ import annotations

import math
import time

from .errors import ResourceExhausted
from .instance import DEPOT, Instance
from .problem import NO_AFFINE, Problem
from .solver import INFEASIBLE, OPTIMAL, Solution, _dedupe_claims
from .tour import Tour

MAX_TOURS = 1_000_000


def enumerate_tours(prob: Problem, cap: int = MAX_TOURS) -> list[tuple[int, ...]]:
    """All capacity-respecting tours whose earliest-arrival chain stays inside every window."""
    nodes, kin, inst = prob.nodes, prob.kin, prob.inst
    out = []

    def dfs(seq, t, load, used):
        cur = seq[-1]
        if len(seq) > 1:
            back = kin.efat(nodes[cur], nodes[DEPOT], t)
            if back is not None:
                out.append(tuple(seq) + (DEPOT,))
                if len(out) > cap:
                    raise ResourceExhausted(f"more than {cap} tours")
        for i in range(1, prob.n_tar + 1):
            if i in used or load + inst.demand(i) > inst.d_max + 1e-9:
                continue
            for w in prob.graph.windows_of[i]:
                ta = kin.efat(nodes[cur], nodes[w], t)
                if ta is None:
                    continue
                dfs(seq + [w], ta, load + inst.demand(i), used | {i})

    dfs([DEPOT], 0.0, 0.0, frozenset())
    return out


def _cheap_lower_bound(prob: Problem, seq) -> float:
    w = prob.world
    total = 0.0
    for u, v in zip(seq, seq[1:]):
        a, b = prob.nodes[u], prob.nodes[v]
        total += w.segment_distance(a.start, a.end, b.start, b.end)
    return total


def brute_force_solve(inst: Instance, n_seg_tar: int = 6, cap: int = MAX_TOURS) -> Solution:
    t0 = time.perf_counter()
    prob = Problem(inst, n_seg_tar, NO_AFFINE)
    if prob.n_tar == 0:
        return Solution(OPTIMAL, [], 0.0, {"tours_enumerated": 0})
    seqs = enumerate_tours(prob, cap)
    groups: dict[frozenset, list] = {}
    for s in seqs:
        key = frozenset(prob.targets(s))
        groups.setdefault(key, []).append((_cheap_lower_bound(prob, s), s))
    best_of: dict[frozenset, Tour | None] = {}

    def group_best(key) -> Tour | None:
        if key in best_of:
            return best_of[key]
        best = None
        for lb, s in sorted(groups[key]):
            if best is not None and lb >= best.cost:
                break
            tour = Tour(s, 0.0, math.inf)
            prob.evaluate([tour])
            if tour.evaluated and (best is None or tour.cost < best.cost):
                best = tour
        best_of[key] = best
        return best

    keys = sorted(groups, key=lambda k: (len(k), sorted(k)))
    all_targets = frozenset(range(1, prob.n_tar + 1))
    best_total, best_sel = math.inf, None

    def search(covered: frozenset, chosen: list, cost: float):
        nonlocal best_total, best_sel
        if covered == all_targets:
            if cost < best_total:
                best_total, best_sel = cost, list(chosen)
            return
        if len(chosen) == inst.n_agt:
            return
        first = min(all_targets - covered)
        for k in keys:
            if first not in k or k & covered:
                continue
            lb = min(x for x, _ in groups[k])
            if cost + lb >= best_total:
                continue
            t = group_best(k)
            if t is None or cost + t.cost >= best_total:
                continue
            chosen.append(t)
            search(covered | k, chosen, cost + t.cost)
            chosen.pop()

    search(frozenset(), [], 0.0)
    stats = {
        "tours_enumerated": len(seqs),
        "tours_evaluated": prob.gcs_queries,
        "wall_time": time.perf_counter() - t0,
    }
    if best_sel is None:
        return Solution(INFEASIBLE, [], math.inf, stats)
    return Solution(OPTIMAL, _dedupe_claims(prob, best_sel), best_total, stats)
