"""Greedy construction of a feasible set of tours, used as the first incumbent and to
repair the master LP when branching leaves it without a covering selection."""

from __future__ import annotations

import math

import numpy as np

from .instance import DEPOT
from .problem import Problem

N_RETRIES = 20


def _allowed(B, u: int, v: int) -> bool:
    return (u, v) not in B


def _construct(prob: Problem, order: list[int], B, first_in_order: bool):
    nodes = prob.nodes
    inst = prob.inst
    kin = prob.kin
    lfdt = prob.graph.lfdt
    rank = {i: r for r, i in enumerate(order)}
    unrouted = set(order)
    tours = []
    for _agent in range(inst.n_agt):
        if not unrouted:
            break
        seq, cur, t, load = [DEPOT], DEPOT, 0.0, 0.0
        while True:
            best = None
            for i in sorted(unrouted, key=rank.__getitem__):
                if load + inst.demand(i) > inst.d_max + 1e-9:
                    continue
                for w in prob.graph.windows_of[i]:
                    if not _allowed(B, cur, w) or t > lfdt[(cur, w)]:
                        continue
                    ta = kin.efat(nodes[cur], nodes[w], t)
                    if ta is None or not math.isfinite(lfdt[(w, DEPOT)]):
                        continue
                    key = (ta, rank[i]) if not first_in_order else (rank[i], ta)
                    if best is None or key < best[0]:
                        best = (key, w, ta, i)
                if first_in_order and best is not None:
                    break
            if best is None:
                break
            _, w, ta, i = best
            seq.append(w)
            cur, t, load = w, ta, load + inst.demand(i)
            unrouted.discard(i)
        if len(seq) == 1:
            break
        if not _allowed(B, cur, DEPOT):
            return None
        seq.append(DEPOT)
        tours.append(tuple(seq))
    if unrouted:
        return None
    return tours


def generate_feasible_solution(prob: Problem, B=frozenset(), seed: int = 0):
    """Up to n_agt executable, capacity-respecting tours covering every target and
    avoiding the edges in B, or None."""
    targets = list(range(1, prob.n_tar + 1))
    earliest_end = {i: min(prob.nodes[w].t_hi for w in prob.graph.windows_of[i]) for i in targets}
    order = sorted(targets, key=lambda i: (earliest_end[i], i))
    attempts = [(order, False)]
    rng = np.random.default_rng(seed)
    for _ in range(N_RETRIES):
        attempts.append(([int(i) for i in rng.permutation(targets)], True))
    for ordering, first in attempts:
        seqs = _construct(prob, ordering, B, first)
        if seqs is None:
            continue
        if not all(prob.chain_feasible(s) for s in seqs):
            continue
        tours = [prob.make_tour(s) for s in seqs]
        if all(math.isfinite(t.lb) for t in tours):
            return tours
    return None
