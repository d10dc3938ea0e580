"""Exact tour cost by best-first search over a graph of convex space-time sets.

Nodes are free rectangles extruded over time, the space-time line segments traced by
the tour's targets during their windows, and the depot (as a start and a goal copy).
Each partial path is scored by a small second-order cone program: knots on the
pairwise intersections of consecutive sets, speed-limited straight legs inside each
set, then an obstacle-unaware leg to the next window of the tour plus a lower bound
on the remaining cost.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import sparse

from .bounds import AffineTerm
from .errors import ResourceExhausted, TourInfeasible
from .geometry import EPS, ConvexRegion, Point, World
from .instance import TargetWindow
from .tour import Trajectory

REGION, WINDOW, DEPOT_START, DEPOT_GOAL = "region", "window", "depot_start", "depot_goal"
MAX_POPS = 1_000_000

_SOLVED = {"Solved", "AlmostSolved"}
_INFEASIBLE = {"PrimalInfeasible", "AlmostPrimalInfeasible"}
MARGIN_TOL = 1e-7  # slack below which a troubled program counts as feasible


@dataclass(frozen=True)
class GCSNode:
    kind: str
    index: int  # region id, or tour position for window nodes
    region: ConvexRegion | None = None
    tw: TargetWindow | None = None


@dataclass
class GCS:
    nodes: list[GCSNode]
    adj: list[list[int]]
    start: int
    goal: int
    window_node: dict[int, int]  # tour position -> node index


# ---------------------------------------------------------------------------
# graph construction


def _passes_through(tw: TargetWindow, p: Point, tol: float = 1e-9) -> bool:
    return _line_hit(tw, p) is not None


def _line_hit(tw: TargetWindow, p: Point, tol: float = 1e-9):
    """Time at which the window's target sits at p, if any."""
    vx, vy = tw.vel
    dx, dy = p[0] - tw.start[0], p[1] - tw.start[1]
    if vx == 0.0 and vy == 0.0:
        return tw.t_lo if math.hypot(dx, dy) <= tol else None
    u = (dx * vx + dy * vy) / (vx * vx + vy * vy)
    if math.hypot(dx - u * vx, dy - u * vy) > tol:
        return None
    t = tw.t_lo + u
    if tw.t_lo - tol <= t <= tw.t_hi + tol:
        return t
    return None


def _windows_meet(a: TargetWindow, b: TargetWindow, tol: float = 1e-9) -> bool:
    lo, hi = max(a.t_lo, b.t_lo), min(a.t_hi, b.t_hi)
    if lo > hi:
        return False
    pa, pb = a.position(lo), b.position(lo)
    d0 = np.array([pa[0] - pb[0], pa[1] - pb[1]])
    dv = np.array([a.vel[0] - b.vel[0], a.vel[1] - b.vel[1]])
    vv = float(dv @ dv)
    u = 0.0 if vv == 0.0 else min(max(-float(d0 @ dv) / vv, 0.0), hi - lo)
    return float(np.linalg.norm(d0 + u * dv)) <= tol


def _region_adjacency(world: World) -> list[list[int]]:
    cached = getattr(world, "_gcs_region_adj", None)
    if cached is not None:
        return cached
    R = world.regions
    b = np.array([[r.xmin, r.ymin, r.xmax, r.ymax] for r in R]).reshape(-1, 4)
    ok = (
        (b[:, None, 0] <= b[None, :, 2] + EPS)
        & (b[None, :, 0] <= b[:, None, 2] + EPS)
        & (b[:, None, 1] <= b[None, :, 3] + EPS)
        & (b[None, :, 1] <= b[:, None, 3] + EPS)
    )
    np.fill_diagonal(ok, False)
    adj = [list(map(int, np.nonzero(row)[0])) for row in ok]
    world._gcs_region_adj = adj
    return adj


def build_gcs(world: World, depot: Point, tour: list[TargetWindow]) -> GCS:
    """Graph of convex sets for one tour; ``tour`` includes both depot endpoints."""
    nodes = [GCSNode(REGION, r.id, region=r) for r in world.regions]
    n_reg = len(nodes)
    adj = [list(a) for a in _region_adjacency(world)]
    window_node = {}
    for n, tw in enumerate(tour[1:-1], start=1):
        window_node[n] = len(nodes)
        nodes.append(GCSNode(WINDOW, n, tw=tw))
        adj.append([])
    start = len(nodes)
    nodes.append(GCSNode(DEPOT_START, 0, tw=tour[0]))
    goal = len(nodes)
    nodes.append(GCSNode(DEPOT_GOAL, len(tour) - 1, tw=tour[-1]))
    adj += [[], []]

    def link(i, j):
        adj[i].append(j)
        adj[j].append(i)

    for r in world.regions:
        if r.contains(depot):
            link(start, r.id)
            link(goal, r.id)
    for n, i in window_node.items():
        tw = tour[n]
        for r in world.regions:
            if r.clip_segment(tw.start, tw.end) is not None:
                link(i, r.id)
        if _passes_through(tw, depot):
            link(i, start)
            link(i, goal)
        for m, j in window_node.items():
            if m > n and _windows_meet(tw, tour[m]):
                link(i, j)
    for a in adj:
        a.sort()
    assert len(nodes) == n_reg + len(window_node) + 2
    return GCS(nodes, adj, start, goal, window_node)


# ---------------------------------------------------------------------------
# convex program


class _Program:
    """Knots (x, y, t) joined by speed-limited legs, in clarabel's standard form."""

    def __init__(self, n_points: int, v_max: float):
        self.n_pts = n_points
        self.n_legs = max(n_points - 1, 0)
        self.n = 3 * n_points + self.n_legs
        self.v = v_max
        self.eq: list[tuple[dict, float]] = []
        self.le: list[tuple[dict, float]] = []
        self.q = np.zeros(self.n)
        self.const = 0.0

    def x(self, i):
        return 3 * i

    def s(self, leg):
        return 3 * self.n_pts + leg

    def in_set(self, i: int, node: GCSNode, t_cap: float = math.inf):
        x, y, t = 3 * i, 3 * i + 1, 3 * i + 2
        if node.kind == REGION:
            r = node.region
            self.le += [({x: 1.0}, r.xmax), ({x: -1.0}, -r.xmin)]
            self.le += [({y: 1.0}, r.ymax), ({y: -1.0}, -r.ymin)]
        elif node.kind == WINDOW:
            self.on_window(i, node.tw, t_cap)
        else:
            p = node.tw.start
            self.eq += [({x: 1.0}, p[0]), ({y: 1.0}, p[1])]
            self.le.append(({t: -1.0}, 0.0))

    def on_window(self, i: int, tw: TargetWindow, t_cap: float = math.inf):
        x, y, t = 3 * i, 3 * i + 1, 3 * i + 2
        vx, vy = tw.vel
        if tw.is_depot:
            self.eq += [({x: 1.0}, tw.start[0]), ({y: 1.0}, tw.start[1])]
            self.le.append(({t: -1.0}, 0.0))
            return
        self.eq.append(({x: 1.0, t: -vx}, tw.start[0] - vx * tw.t_lo))
        self.eq.append(({y: 1.0, t: -vy}, tw.start[1] - vy * tw.t_lo))
        self.le.append(({t: 1.0}, min(tw.t_hi, t_cap)))
        self.le.append(({t: -1.0}, -tw.t_lo))

    def fix_time(self, i: int, t: float):
        self.eq.append(({3 * i + 2: 1.0}, t))

    def _assemble(self, slack: bool):
        """Standard-form data; with slack, one extra variable z relaxes every inequality row."""
        n, L = self.n + int(slack), self.n_legs
        z = self.n
        rows, cols, vals, b = [], [], [], []
        r = 0
        for block in (self.eq, self.le):
            for coefs, rhs in block:
                for c, v in coefs.items():
                    rows.append(r)
                    cols.append(c)
                    vals.append(v)
                b.append(rhs)
                r += 1
        n_eq = len(self.eq)
        # speed: s_l - v t_b + v t_a <= 0
        for leg in range(L):
            a, bb = leg, leg + 1
            rows += [r, r, r]
            cols += [self.s(leg), 3 * bb + 2, 3 * a + 2]
            vals += [1.0, -self.v, self.v]
            b.append(0.0)
            r += 1
        if slack:
            for row in range(n_eq, r):
                rows.append(row)
                cols.append(z)
                vals.append(-1.0)
            rows.append(r)
            cols.append(z)
            vals.append(-1.0)
            b.append(0.0)
            r += 1
        n_le = r - n_eq
        # cones: (s_l, x_b - x_a, y_b - y_a)
        for leg in range(L):
            a, bb = leg, leg + 1
            rows += [r, r + 1, r + 1, r + 2, r + 2]
            cols += [self.s(leg), 3 * bb, 3 * a, 3 * bb + 1, 3 * a + 1]
            vals += [-1.0, -1.0, 1.0, -1.0, 1.0]
            b += [0.0, 0.0, 0.0]
            r += 3
        A = _csc(np.array(rows), np.array(cols), np.array(vals), r, n)
        cones = []
        if n_eq:
            cones.append(clarabel.ZeroConeT(n_eq))
        if n_le:
            cones.append(clarabel.NonnegativeConeT(n_le))
        cones += [clarabel.SecondOrderConeT(3)] * L
        return A, np.array(b), cones, n_eq, n_le

    def _run(self, q, A, b, cones, tight: bool):
        sol = clarabel.DefaultSolver(_zero_csc(len(q)), q, A, b, cones, _settings(tight)).solve()
        return str(sol.status), sol

    def solve(self):
        """Returns (objective, knots) or None when infeasible."""
        A, b, cones, n_eq, n_le = self._assemble(False)
        q = self.q.copy()
        q[3 * self.n_pts :] += 1.0
        for tight in (True, False):
            status, sol = self._run(q, A, b, cones, tight)
            if status in _INFEASIBLE:
                return None
            if status in _SOLVED:
                break
        else:
            sol = self._marginal(q, b, n_eq, n_le)
            if sol is None:
                return None
        xs = np.asarray(sol.x)
        knots = [tuple(map(float, xs[3 * i : 3 * i + 3])) for i in range(self.n_pts)]
        return float(q @ xs[: self.n]) + self.const, knots

    def _marginal(self, q, b, n_eq, n_le):
        """Numerical trouble usually means the program is infeasible or only barely feasible.
        Minimize one slack shared by all inequality rows; a positive minimum proves
        infeasibility, otherwise re-solve with the rows loosened by that slack."""
        A, bz, cones, _, _ = self._assemble(True)
        qz = np.zeros(self.n + 1)
        qz[-1] = 1.0
        status, sol = self._run(qz, A, bz, cones, False)
        if status not in _SOLVED:
            raise RuntimeError(f"convex subproblem failed with status {status}")
        z = float(sol.x[-1])
        if z > MARGIN_TOL:
            return None
        A, b, cones, _, _ = self._assemble(False)
        b = b.copy()
        b[n_eq : n_eq + n_le] += max(z, 0.0) + MARGIN_TOL
        status, sol = self._run(q, A, b, cones, False)
        if status not in _SOLVED:
            raise RuntimeError(f"convex subproblem failed with status {status}")
        return sol


def _csc(rows, cols, vals, m: int, n: int) -> sparse.csc_matrix:
    """CSC matrix from triplets with distinct (row, col) pairs, skipping the COO route."""
    order = np.lexsort((rows, cols))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(cols, minlength=n), out=indptr[1:])
    return sparse.csc_matrix((vals[order], rows[order], indptr), shape=(m, n))


_ZERO: dict[int, sparse.csc_matrix] = {}


def _zero_csc(n: int) -> sparse.csc_matrix:
    P = _ZERO.get(n)
    if P is None:
        P = _ZERO[n] = sparse.csc_matrix((n, n))
    return P


def _settings(tight: bool) -> clarabel.DefaultSettings:
    st = clarabel.DefaultSettings()
    st.verbose = False
    if tight:
        st.tol_gap_abs = st.tol_gap_rel = st.tol_feas = 1e-9
    else:
        # retry after numerical trouble: no presolve, more iterations, default tolerances
        st.presolve_enable = False
        st.max_iter = 500
    return st


# ---------------------------------------------------------------------------
# search


@dataclass
class GCSResult:
    cost: float
    trajectory: Trajectory
    pops: int
    solves: int
    popped_f: list[float] = field(default_factory=list)
    raw_f: list[float] = field(default_factory=list)


@dataclass
class _Path:
    nodes: tuple[int, ...]
    visited: int  # number of tour windows on the path
    last_window_at: int  # index in ``nodes`` of the latest window node (0 = depot start)
    f: float
    raw_f: float
    knots: list


class TourEvaluator:
    """Best-first search for the cheapest trajectory executing one tour."""

    def __init__(
        self,
        world: World,
        v_max: float,
        tour: list[TargetWindow],
        t_max: list[float],
        heuristic: list[AffineTerm | None] | None,
        max_pops: int = MAX_POPS,
    ):
        self.world = world
        self.v = v_max
        self.tour = tour
        self.t_max = t_max
        self.heuristic = heuristic  # None selects the multi-leg interception completion
        self.max_pops = max_pops
        self.gcs = build_gcs(world, tour[0].start, tour)
        self.m = len(tour) - 2
        self.solves = 0

    def _set_cap(self, node: GCSNode) -> float:
        return self.t_max[node.index] if node.kind == WINDOW else math.inf

    def relax(self, nodes: tuple[int, ...], visited: int):
        """Optimal value and knots of the convex program for a path, or None."""
        G = self.gcs.nodes
        path = [G[i] for i in nodes]
        goal = path[-1].kind == DEPOT_GOAL
        nxt = visited + 1  # next tour position to intercept
        if goal:
            tail = []
        elif self.heuristic is None:
            tail = list(range(nxt, len(self.tour)))
        else:
            tail = [nxt]
        n_pts = len(path) + (0 if goal else 1) + len(tail)
        prog = _Program(n_pts, self.v)
        prog.in_set(0, path[0])
        prog.fix_time(0, 0.0)
        for k in range(1, len(path)):
            prog.in_set(k, path[k - 1], self._set_cap(path[k - 1]))
            prog.in_set(k, path[k], self._set_cap(path[k]))
        if not goal:
            k = len(path)
            prog.in_set(k, path[-1], self._set_cap(path[-1]))
            for j, pos in enumerate(tail, start=k + 1):
                prog.on_window(j, self.tour[pos], self.t_max[pos])
            if self.heuristic is not None:
                h = self.heuristic[nxt]
                if h is None:
                    return None
                prog.q[3 * (n_pts - 1) + 2] += h.slope
                prog.const += h.intercept - h.r_max
        self.solves += 1
        return prog.solve()

    def _successors(self, p: _Path) -> list[tuple[int, int, int]]:
        G = self.gcs.nodes
        out = []
        after = set(p.nodes[p.last_window_at + 1 :])
        for j in self.gcs.adj[p.nodes[-1]]:
            node = G[j]
            if node.kind == REGION:
                if j in after:
                    continue
                out.append((j, p.visited, p.last_window_at))
            elif node.kind == WINDOW:
                if node.index == p.visited + 1:
                    out.append((j, p.visited + 1, len(p.nodes)))
            elif node.kind == DEPOT_GOAL and p.visited == self.m:
                out.append((j, p.visited, p.last_window_at))
        return out

    def search(self) -> GCSResult:
        if self.m == 0:
            d = self.tour[0].start
            return GCSResult(0.0, Trajectory([(d[0], d[1], 0.0), (d[0], d[1], 0.0)]), 0, 0)
        tie = itertools.count()
        start = (self.gcs.start,)
        res = self.relax(start, 0)
        if res is None:
            raise TourInfeasible(f"no trajectory leaves the depot for tour {self._ids()}")
        root = _Path(start, 0, 0, res[0], res[0], res[1])
        heap = [(root.f, 0, 1, next(tie), root)]
        popped, raw = [], []
        pops = 0
        while heap:
            f, _, _, _, p = heapq.heappop(heap)
            pops += 1
            popped.append(f)
            raw.append(p.raw_f)
            if pops > self.max_pops:
                raise ResourceExhausted(f"GCS search exceeded {self.max_pops} pops")
            if p.nodes[-1] == self.gcs.goal:
                traj = self._trajectory(p)
                return GCSResult(p.raw_f, traj, pops, self.solves, popped, raw)
            for j, vis, lw in self._successors(p):
                nodes = p.nodes + (j,)
                res = self.relax(nodes, vis)
                if res is None:
                    continue
                val = res[0]
                child = _Path(nodes, vis, lw, max(val, p.f), val, res[1])
                heapq.heappush(heap, (child.f, -vis, len(nodes), next(tie), child))
        raise TourInfeasible(f"graph of convex sets exhausted for tour {self._ids()}")

    def _ids(self):
        return tuple(tw.id for tw in self.tour)

    def _trajectory(self, p: _Path) -> Trajectory:
        G = self.gcs.nodes
        knots = [(k[0], k[1], max(k[2], 0.0)) for k in p.knots[: len(p.nodes)]]
        # clean tiny non-monotonic solver noise in times
        for i in range(1, len(knots)):
            if knots[i][2] < knots[i - 1][2]:
                knots[i] = (knots[i][0], knots[i][1], knots[i - 1][2])
        claims = []
        for k, i in enumerate(p.nodes):
            node = G[i]
            if node.kind == WINDOW:
                tw = node.tw
                claims.append((tw.target, tw.window, knots[k][2]))
        return Trajectory(knots, claims)


def evaluate_tour(
    world: World,
    v_max: float,
    tour: list[TargetWindow],
    t_max: list[float],
    heuristic: list[AffineTerm | None] | None,
    max_pops: int = MAX_POPS,
) -> GCSResult:
    return TourEvaluator(world, v_max, tour, t_max, heuristic, max_pops).search()
