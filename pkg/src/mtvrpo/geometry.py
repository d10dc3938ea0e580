"""Grid obstacle maps, rectangular free-space decomposition and geodesic distances.

Free space is the closure of the union of free cells: a segment is collision-free
unless it crosses the interior of the blocked region, so paths may graze obstacle
boundaries and squeeze through corner pinch points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import InvalidMap, ParseError, PointInObstacle, Unreachable

EPS = 1e-9

Point = tuple[float, float]


@dataclass(frozen=True, eq=False)
class ObstacleMap:
    width_cells: int
    height_cells: int
    cell_size: float
    blocked: np.ndarray  # (height, width) bool, row 0 = minimal y

    @property
    def width(self) -> float:
        return self.width_cells * self.cell_size

    @property
    def height(self) -> float:
        return self.height_cells * self.cell_size

    def cell_of(self, p: Point) -> tuple[int, int]:
        c = min(int(p[0] // self.cell_size), self.width_cells - 1)
        r = min(int(p[1] // self.cell_size), self.height_cells - 1)
        return r, c

    def __eq__(self, other):
        if not isinstance(other, ObstacleMap):
            return NotImplemented
        return (
            self.width_cells == other.width_cells
            and self.height_cells == other.height_cells
            and self.cell_size == other.cell_size
            and np.array_equal(self.blocked, other.blocked)
        )

    __hash__ = None


@dataclass(frozen=True)
class ConvexRegion:
    """Axis-aligned free rectangle in meters."""

    id: int
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def polygon(self) -> list[Point]:
        return [
            (self.xmin, self.ymin),
            (self.xmax, self.ymin),
            (self.xmax, self.ymax),
            (self.xmin, self.ymax),
        ]

    def contains(self, p: Point, tol: float = EPS) -> bool:
        return (
            self.xmin - tol <= p[0] <= self.xmax + tol
            and self.ymin - tol <= p[1] <= self.ymax + tol
        )

    def intersects(self, other: "ConvexRegion", tol: float = EPS) -> bool:
        return (
            self.xmin <= other.xmax + tol
            and other.xmin <= self.xmax + tol
            and self.ymin <= other.ymax + tol
            and other.ymin <= self.ymax + tol
        )

    def clip_segment(self, p: Point, q: Point, tol: float = EPS):
        """Parameter interval [u0, u1] of p + u (q - p) inside the closed box, or None."""
        lo, hi = 0.0, 1.0
        for a, d, mn, mx in (
            (p[0], q[0] - p[0], self.xmin - tol, self.xmax + tol),
            (p[1], q[1] - p[1], self.ymin - tol, self.ymax + tol),
        ):
            if d == 0.0:
                if a < mn or a > mx:
                    return None
                continue
            u0, u1 = (mn - a) / d, (mx - a) / d
            if u0 > u1:
                u0, u1 = u1, u0
            lo, hi = max(lo, u0), min(hi, u1)
            if lo > hi:
                return None
        return lo, hi


# ---------------------------------------------------------------------------
# map file format

def load_map(text: str) -> ObstacleMap:
    if not isinstance(text, str):
        raise ParseError("map must be text")
    lines = [ln.rstrip("\r") for ln in text.strip("\n").splitlines()]
    if not lines:
        raise ParseError("empty map text")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "resolution":
        raise ParseError("map header must be 'resolution <W> <H> <cell_size>'")
    try:
        w, h, cell = int(head[1]), int(head[2]), float(head[3])
    except ValueError as exc:
        raise ParseError(f"bad map header: {lines[0]!r}") from exc
    if w <= 0 or h <= 0 or not (cell > 0 and math.isfinite(cell)):
        raise ParseError("map dimensions and cell size must be positive")
    rows = lines[1:]
    if len(rows) != h:
        raise ParseError(f"expected {h} grid rows, found {len(rows)}")
    blocked = np.zeros((h, w), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != w or set(row) - {".", "@"}:
            raise ParseError(f"grid row {r} must be {w} characters of '.' or '@'")
        blocked[r] = [ch == "@" for ch in row]
    if w != h:
        raise InvalidMap("obstacle maps must be square")
    if blocked.all():
        raise InvalidMap("map has no free cell")
    return ObstacleMap(w, h, cell, blocked)


def dump_map(m: ObstacleMap) -> str:
    out = [f"resolution {m.width_cells} {m.height_cells} {m.cell_size!r}"]
    for row in m.blocked:
        out.append("".join("@" if b else "." for b in row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# rectangle decomposition

def _max_rectangle(mask: np.ndarray) -> tuple[int, int, int, int, int]:
    """Largest all-True rectangle: (area, r0, c0, r1, c1), end-exclusive."""
    H, W = mask.shape
    heights = np.zeros(W, dtype=int)
    best = (0, 0, 0, 0, 0)
    for r in range(H):
        heights = np.where(mask[r], heights + 1, 0)
        stack: list[tuple[int, int]] = []
        for c in range(W + 1):
            h = int(heights[c]) if c < W else 0
            start = c
            while stack and stack[-1][1] >= h:
                s, sh = stack.pop()
                area = sh * (c - s)
                if area > best[0]:
                    best = (area, r - sh + 1, s, r + 1, c)
                start = s
            stack.append((start, h))
    return best


def rectangle_partition(mask: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Greedy largest-first partition of the True cells into rectangles."""
    mask = mask.copy()
    rects = []
    while mask.any():
        area, r0, c0, r1, c1 = _max_rectangle(mask)
        rects.append((r0, c0, r1, c1))
        mask[r0:r1, c0:c1] = False
    return rects


def decompose_free_space(m: ObstacleMap) -> list[ConvexRegion]:
    cs = m.cell_size
    return [
        ConvexRegion(k, c0 * cs, r0 * cs, c1 * cs, r1 * cs)
        for k, (r0, c0, r1, c1) in enumerate(rectangle_partition(~m.blocked))
    ]


# ---------------------------------------------------------------------------
# numba kernels

@njit(cache=True)
def _clear(px, py, qx, qy, boxes):
    dx = qx - px
    dy = qy - py
    for m in range(boxes.shape[0]):
        x0 = boxes[m, 0]
        x1 = boxes[m, 1]
        y0 = boxes[m, 2]
        y1 = boxes[m, 3]
        lo = 0.0
        hi = 1.0
        if dx == 0.0:
            if px <= x0 or px >= x1:
                continue
        else:
            a = (x0 - px) / dx
            b = (x1 - px) / dx
            if a > b:
                a, b = b, a
            if a > lo:
                lo = a
            if b < hi:
                hi = b
            if lo >= hi:
                continue
        if dy == 0.0:
            if py <= y0 or py >= y1:
                continue
        else:
            a = (y0 - py) / dy
            b = (y1 - py) / dy
            if a > b:
                a, b = b, a
            if a > lo:
                lo = a
            if b < hi:
                hi = b
        if lo < hi:
            return False
    return True


@njit(cache=True)
def _inside(px, py, boxes):
    for m in range(boxes.shape[0]):
        if boxes[m, 0] < px < boxes[m, 1] and boxes[m, 2] < py < boxes[m, 3]:
            return True
    return False


@njit(cache=True)
def _visible_dists(px, py, verts, boxes):
    n = verts.shape[0]
    out = np.empty(n)
    for i in range(n):
        vx = verts[i, 0]
        vy = verts[i, 1]
        if _clear(px, py, vx, vy, boxes):
            out[i] = math.hypot(vx - px, vy - py)
        else:
            out[i] = np.inf
    return out


@njit(cache=True)
def _visibility_graph(verts, boxes):
    n = verts.shape[0]
    w = np.full((n, n), np.inf)
    for i in range(n):
        w[i, i] = 0.0
        for j in range(i + 1, n):
            if _clear(verts[i, 0], verts[i, 1], verts[j, 0], verts[j, 1], boxes):
                d = math.hypot(verts[i, 0] - verts[j, 0], verts[i, 1] - verts[j, 1])
                w[i, j] = d
                w[j, i] = d
    return w


@njit(cache=True)
def _segment_reach(ax, ay, bx, by, verts, boxes):
    """Shortest visible straight distance from segment [a, b] to each vertex."""
    n = verts.shape[0]
    out = np.full(n, np.inf)
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    for i in range(n):
        vx = verts[i, 0]
        vy = verts[i, 1]
        best = np.inf
        if L2 > 0.0:
            u = ((vx - ax) * dx + (vy - ay) * dy) / L2
            if u > 0.0 and u < 1.0:
                fx = ax + u * dx
                fy = ay + u * dy
                if _clear(fx, fy, vx, vy, boxes):
                    best = math.hypot(vx - fx, vy - fy)
        if best == np.inf:
            for e in range(2):
                ex = ax if e == 0 else bx
                ey = ay if e == 0 else by
                if _clear(ex, ey, vx, vy, boxes):
                    d = math.hypot(vx - ex, vy - ey)
                    if d < best:
                        best = d
        out[i] = best
    return out


def _closest_points(p1, q1, p2, q2):
    """Closest pair of points between segments [p1, q1] and [p2, q2]."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    if a <= 1e-18 and e <= 1e-18:
        return p1, p2
    if a <= 1e-18:
        s, t = 0.0, min(max(f / e, 0.0), 1.0)
    else:
        c = d1 @ r
        if e <= 1e-18:
            t, s = 0.0, min(max(-c / a, 0.0), 1.0)
        else:
            b = d1 @ d2
            den = a * e - b * b
            s = min(max((b * f - c * e) / den, 0.0), 1.0) if den > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t, s = 1.0, min(max((b - c) / a, 0.0), 1.0)
    return p1 + s * d1, p2 + t * d2


def _foot(p, a, b):
    d = b - a
    L2 = d @ d
    if L2 <= 1e-18:
        return a
    u = min(max(((p - a) @ d) / L2, 0.0), 1.0)
    return a + u * d


# ---------------------------------------------------------------------------

@dataclass(eq=False)
class World:
    """Immutable geometric view of an obstacle map with memoized distance queries."""

    map: ObstacleMap
    regions: list[ConvexRegion] = field(init=False)
    boxes: np.ndarray = field(init=False, repr=False)
    vertices: np.ndarray = field(init=False, repr=False)
    dist: np.ndarray = field(init=False, repr=False)
    pred: np.ndarray = field(init=False, repr=False)

    _CACHE_CAP = 200_000

    def __post_init__(self):
        m = self.map
        self.regions = decompose_free_space(m)
        self.boxes = self._cell_boxes()
        self.vertices = self._corner_vertices()
        n = len(self.vertices)
        if n:
            w = _visibility_graph(self.vertices, self.boxes)
            adj = np.where(np.isfinite(w), w, 0.0)
            np.fill_diagonal(adj, 0.0)
            self.dist, self.pred = shortest_path(
                csr_matrix(adj), method="D", directed=False, return_predecessors=True
            )
        else:
            self.dist = np.zeros((0, 0))
            self.pred = np.zeros((0, 0), dtype=int)
        self._reach: dict = {}
        self._hub: dict = {}
        self._seg_hub: dict = {}
        self._seg_reach: dict = {}

    # -- construction helpers

    def _cell_boxes(self) -> np.ndarray:
        """One box per blocked cell; sides facing blocked neighbours or the map border grow,
        sides facing free cells shrink."""
        m = self.map
        H, W, cs = m.height_cells, m.width_cells, m.cell_size
        b = m.blocked

        def blocked(r, c):
            return not (0 <= r < H and 0 <= c < W) or b[r, c]

        out = []
        for r, c in zip(*np.nonzero(b)):
            x0, x1, y0, y1 = c * cs, (c + 1) * cs, r * cs, (r + 1) * cs
            x0 += -EPS if blocked(r, c - 1) else EPS
            x1 += EPS if blocked(r, c + 1) else -EPS
            y0 += -EPS if blocked(r - 1, c) else EPS
            y1 += EPS if blocked(r + 1, c) else -EPS
            out.append((x0, x1, y0, y1))
        return np.array(out, dtype=float).reshape(-1, 4)

    def _corner_vertices(self) -> np.ndarray:
        m = self.map
        H, W, cs = m.height_cells, m.width_cells, m.cell_size
        pad = np.ones((H + 2, W + 2), dtype=bool)  # outside the map counts as blocked
        pad[1:-1, 1:-1] = m.blocked
        # cells around grid point (r, c): rows r-1, r and cols c-1, c
        sw, se = pad[:-1, :-1], pad[:-1, 1:]
        nw, ne = pad[1:, :-1], pad[1:, 1:]
        count = sw.astype(int) + se + nw + ne
        pinch = (count == 2) & (sw == ne)
        rr, cc = np.nonzero((count == 1) | pinch)
        return np.column_stack([cc * cs, rr * cs]).astype(float).reshape(-1, 2)

    # -- point predicates

    def in_bounds(self, p: Point, tol: float = EPS) -> bool:
        return -tol <= p[0] <= self.map.width + tol and -tol <= p[1] <= self.map.height + tol

    def is_free(self, p: Point) -> bool:
        return self.in_bounds(p) and not _inside(float(p[0]), float(p[1]), self.boxes)

    def _check(self, p: Point):
        if not self.is_free(p):
            raise PointInObstacle(f"point {tuple(p)} is not in free space")

    def segment_free(self, p: Point, q: Point) -> bool:
        return _clear(float(p[0]), float(p[1]), float(q[0]), float(q[1]), self.boxes)

    # -- cached per-point data

    def _trim(self, cache: dict):
        if len(cache) > self._CACHE_CAP:
            cache.clear()

    def _reach_of(self, p: Point) -> np.ndarray:
        key = (float(p[0]), float(p[1]))
        r = self._reach.get(key)
        if r is None:
            self._trim(self._reach)
            r = _visible_dists(key[0], key[1], self.vertices, self.boxes)
            self._reach[key] = r
        return r

    def _hub_of(self, p: Point) -> np.ndarray:
        """Shortest distance from p to every vertex."""
        key = (float(p[0]), float(p[1]))
        g = self._hub.get(key)
        if g is None:
            self._trim(self._hub)
            r = self._reach_of(key)
            g = (r[:, None] + self.dist).min(axis=0) if len(r) else r
            self._hub[key] = g
        return g

    # -- queries

    def spatial_distance(self, p: Point, q: Point) -> float:
        p = (float(p[0]), float(p[1]))
        q = (float(q[0]), float(q[1]))
        self._check(p)
        self._check(q)
        if p == q:
            return 0.0
        if _clear(p[0], p[1], q[0], q[1], self.boxes):
            return math.hypot(q[0] - p[0], q[1] - p[1])
        if not len(self.vertices):
            return math.inf
        if q in self._hub and p not in self._hub:
            p, q = q, p
        return float((self._hub_of(p) + self._reach_of(q)).min())

    def spatial_path(self, p: Point, q: Point) -> list[Point]:
        p = (float(p[0]), float(p[1]))
        q = (float(q[0]), float(q[1]))
        self._check(p)
        self._check(q)
        if p == q:
            return [p]
        if _clear(p[0], p[1], q[0], q[1], self.boxes):
            return [p, q]
        if not len(self.vertices):
            raise Unreachable(f"{p} and {q} are not connected")
        a, b = self._reach_of(p), self._reach_of(q)
        total = a[:, None] + self.dist + b[None, :]
        u, w = np.unravel_index(np.argmin(total), total.shape)
        if not math.isfinite(total[u, w]):
            raise Unreachable(f"{p} and {q} are not connected")
        chain = [w]
        while chain[-1] != u:
            chain.append(self.pred[u, chain[-1]])
        chain.reverse()
        return [p] + [tuple(map(float, self.vertices[k])) for k in chain] + [q]

    # -- segment-to-segment distances

    def _segment_reach_of(self, a: Point, b: Point) -> np.ndarray:
        key = (float(a[0]), float(a[1]), float(b[0]), float(b[1]))
        r = self._seg_reach.get(key)
        if r is None:
            self._trim(self._seg_reach)
            r = _segment_reach(*key, self.vertices, self.boxes)
            self._seg_reach[key] = r
        return r

    def _segment_hub_of(self, a: Point, b: Point) -> np.ndarray:
        key = (float(a[0]), float(a[1]), float(b[0]), float(b[1]))
        g = self._seg_hub.get(key)
        if g is None:
            self._trim(self._seg_hub)
            r = self._segment_reach_of(a, b)
            g = (r[:, None] + self.dist).min(axis=0) if len(r) else r
            self._seg_hub[key] = g
        return g

    def segment_distance(self, a0: Point, a1: Point, b0: Point, b1: Point) -> float:
        """Length of the shortest collision-free path from any point of one free
        segment to any point of another."""
        A0, A1, B0, B1 = (np.asarray(x, dtype=float) for x in (a0, a1, b0, b1))
        pairs = [_closest_points(A0, A1, B0, B1)]
        pairs += [(A0, _foot(A0, B0, B1)), (A1, _foot(A1, B0, B1))]
        pairs += [(_foot(B0, A0, A1), B0), (_foot(B1, A0, A1), B1)]
        pairs += [(x, y) for x in (A0, A1) for y in (B0, B1)]
        best = math.inf
        for x, y in pairs:
            d = math.hypot(y[0] - x[0], y[1] - x[1])
            if d < best and _clear(x[0], x[1], y[0], y[1], self.boxes):
                best = d
        if best == 0.0 or not len(self.vertices):
            return best
        via = (self._segment_hub_of(a0, a1) + self._segment_reach_of(b0, b1)).min()
        return float(min(best, via))
