"""Relaxed-continuity bounds on tour cost.

Every target-window is cut into time segments. Chaining segments with spatial
segment-to-segment distances (and only the loosest timing check) lower-bounds the
cost of a tour; chaining the segments' start points with exact timing checks
upper-bounds it. The same segment data yields backward cost-to-go values, an
affine under-estimator of them per tour position, and latest departure times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, TourInfeasible
from .geometry import Point
from .instance import Instance, TargetWindow, TWGraph
from .kinematics import Kinematics

_TIME_SLACK = 1e-9


@dataclass(frozen=True)
class Segment:
    node: int
    k: int
    t_lo: float
    t_hi: float
    start: Point
    end: Point
    length: float


def allocate_counts(durations: list[float], n_seg_tar: int) -> list[int]:
    """Split ``n_seg_tar`` segments over windows proportionally to duration
    (largest remainder, at least one per window)."""
    n_win = len(durations)
    if n_seg_tar < n_win:
        raise ConfigError(f"n_seg_tar={n_seg_tar} is below the window count {n_win}")
    total = sum(durations)
    quotas = [n_seg_tar * d / total for d in durations]
    counts = [max(1, math.floor(q)) for q in quotas]
    rem = sorted(range(n_win), key=lambda j: (-(quotas[j] - math.floor(quotas[j])), j))
    extra = n_seg_tar - sum(counts)
    for j in rem[:extra] if extra > 0 else ():
        counts[j] += 1
    while sum(counts) > n_seg_tar:
        j = min((j for j in range(n_win) if counts[j] > 1), key=lambda j: (quotas[j] - counts[j], j))
        counts[j] -= 1
    return counts


def allocate_segments(graph: TWGraph, n_seg_tar: int) -> dict[int, list[Segment]]:
    segs: dict[int, list[Segment]] = {}
    for target, ids in graph.windows_of.items():
        nodes = [graph.nodes[i] for i in ids]
        if target == 0:
            d = nodes[0]
            segs[d.id] = [Segment(d.id, 0, 0.0, math.inf, d.start, d.start, 0.0)]
            continue
        counts = allocate_counts([w.t_hi - w.t_lo for w in nodes], n_seg_tar)
        for w, n in zip(nodes, counts):
            cuts = np.linspace(w.t_lo, w.t_hi, n + 1)
            cuts[-1] = w.t_hi
            segs[w.id] = [
                Segment(
                    w.id,
                    k,
                    float(cuts[k]),
                    float(cuts[k + 1]),
                    w.position(float(cuts[k])),
                    w.position(float(cuts[k + 1])),
                    w.speed * float(cuts[k + 1] - cuts[k]),
                )
                for k in range(n)
            ]
    return segs


@dataclass(frozen=True)
class AffineTerm:
    slope: float
    intercept: float
    r_max: float

    def __call__(self, t: float) -> float:
        return self.slope * t + self.intercept - self.r_max


def fit_affine(t_lo: np.ndarray, t_hi: np.ndarray, h: np.ndarray) -> AffineTerm | None:
    """Least-squares line through (segment start, h) shifted down to under-estimate
    h at every segment start and end; None when no segment has finite h."""
    ok = np.isfinite(h)
    if not ok.any():
        return None
    a, b, c = t_lo[ok], t_hi[ok], h[ok]
    n = len(a)
    s1, s2 = a.sum(), (a * a).sum()
    det = n * s2 - s1 * s1
    if abs(det) < 1e-12 * max(1.0, s2 * n):
        slope, icpt = 0.0, float(c.mean())
    else:
        sb, sab = c.sum(), (a * c).sum()
        slope = float((n * sab - s1 * sb) / det)
        icpt = float((s2 * sb - s1 * sab) / det)
    resid = np.concatenate([slope * a + icpt - c, slope * b + icpt - c])
    return AffineTerm(slope, icpt, float(resid.max()))


class SegmentData:
    """Segments of every target-window plus memoized segment and segment-start costs."""

    def __init__(self, inst: Instance, graph: TWGraph, n_seg_tar: int = 6):
        self.inst = inst
        self.graph = graph
        self.world = inst.world
        self.v_max = inst.v_max
        self.n_seg_tar = n_seg_tar
        self.segments = allocate_segments(graph, n_seg_tar)
        self._seg: dict[tuple[int, int], np.ndarray] = {}
        self._start: dict[tuple[int, int], np.ndarray] = {}
        self.delta = {u: np.array([s.length for s in ss]) for u, ss in self.segments.items()}
        self.t_lo = {u: np.array([s.t_lo for s in ss]) for u, ss in self.segments.items()}
        self.t_hi = {u: np.array([s.t_hi for s in ss]) for u, ss in self.segments.items()}

    def n_seg(self, u: int) -> int:
        return len(self.segments[u])

    # -- edge costs

    def seg_edge_cost(self, a: Segment, b: Segment) -> float:
        c = self.world.segment_distance(a.start, a.end, b.start, b.end)
        if a.t_lo + c / self.v_max <= b.t_hi + _TIME_SLACK:
            return c
        return math.inf

    def start_edge_cost(self, a: Segment, b: Segment) -> float:
        c = self.world.spatial_distance(a.start, b.start)
        if b.node == 0 or a.t_lo + c / self.v_max <= b.t_lo + _TIME_SLACK:
            return c
        return math.inf

    def cseg(self, u: int, v: int) -> np.ndarray:
        m = self._seg.get((u, v))
        if m is None:
            m = np.array(
                [[self.seg_edge_cost(a, b) for b in self.segments[v]] for a in self.segments[u]]
            )
            self._seg[(u, v)] = m
        return m

    def cstart(self, u: int, v: int) -> np.ndarray:
        m = self._start.get((u, v))
        if m is None:
            m = np.array(
                [[self.start_edge_cost(a, b) for b in self.segments[v]] for a in self.segments[u]]
            )
            self._start[(u, v)] = m
        return m

    def precompute(self) -> None:
        for a in self.graph.nodes:
            for b in self.graph.nodes:
                if a.target != b.target:
                    self.cseg(a.id, b.id)
                    self.cstart(a.id, b.id)

    # -- bounds over a tour

    @staticmethod
    def relax(g: np.ndarray, cost: np.ndarray) -> np.ndarray:
        return (g[:, None] + cost).min(axis=0)

    def forward(self, seq, upper: bool = False) -> list[np.ndarray]:
        block = self.cstart if upper else self.cseg
        g = [np.zeros(1)]
        for u, v in zip(seq, seq[1:]):
            g.append(self.relax(g[-1], block(u, v)))
        return g

    def tour_lower_bound(self, seq, g_last: np.ndarray | None = None) -> float:
        if len(seq) <= 2 and all(u == 0 for u in seq):
            return 0.0
        if g_last is not None:
            return float(self.relax(g_last, self.cseg(seq[-2], seq[-1]))[0])
        return float(self.forward(seq)[-1][0])

    def tour_upper_bound(self, seq, g_last: np.ndarray | None = None) -> float:
        if len(seq) <= 2 and all(u == 0 for u in seq):
            return 0.0
        if g_last is not None:
            return float(self.relax(g_last, self.cstart(seq[-2], seq[-1]))[0])
        return float(self.forward(seq, upper=True)[-1][0])

    def compute_h_seg(self, seq) -> list[np.ndarray]:
        """Backward segment-graph cost to the final depot, per tour position."""
        h = [np.zeros(1)]
        for u, v in zip(reversed(seq[:-1]), reversed(seq[1:])):
            h.append((self.cseg(u, v) + h[-1][None, :]).min(axis=1))
        h.reverse()
        return h

    def fit_affine_heuristic(self, seq, h_seg: list[np.ndarray] | None = None):
        """Per-position affine under-estimators of remaining cost; the final depot gets 0."""
        if h_seg is None:
            h_seg = self.compute_h_seg(seq)
        terms: list[AffineTerm | None] = []
        for n, u in enumerate(seq):
            if n == len(seq) - 1:
                terms.append(AffineTerm(0.0, 0.0, 0.0))
            elif n == 0:
                terms.append(AffineTerm(0.0, float(h_seg[0][0]), 0.0))
            else:
                terms.append(fit_affine(self.t_lo[u], self.t_hi[u], h_seg[n]))
        return terms


def compute_tmax(seq, graph: TWGraph, kin: Kinematics) -> list[float]:
    """Latest interception time per position that still lets the rest of the tour run."""
    nodes: list[TargetWindow] = [graph.nodes[u] for u in seq]
    tmax = [math.inf] * len(seq)
    for n in range(len(seq) - 2, -1, -1):
        t = kin.lfdt(nodes[n], nodes[n + 1], tmax[n + 1])
        if t is None:
            raise TourInfeasible(f"no departure from position {n} of {tuple(seq)} meets the rest")
        tmax[n] = min(t, nodes[n].t_hi)
    return tmax
