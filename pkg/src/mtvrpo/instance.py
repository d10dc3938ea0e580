"""Problem data, the instance JSON format, the random generator and the target-window graph."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
from scipy import ndimage

from .errors import GenerationFailed, MTVRPOError, ParseError, ValidationError
from .geometry import ObstacleMap, Point, World, dump_map, load_map

if TYPE_CHECKING:
    from .kinematics import Kinematics

DEPOT = 0


@dataclass(frozen=True)
class Window:
    t_lo: float
    t_hi: float
    start: Point
    vel: Point

    def position(self, t: float) -> Point:
        dt = t - self.t_lo
        return (self.start[0] + self.vel[0] * dt, self.start[1] + self.vel[1] * dt)

    @property
    def end(self) -> Point:
        return self.position(self.t_hi)

    @property
    def speed(self) -> float:
        return math.hypot(*self.vel)


@dataclass(frozen=True)
class Target:
    demand: float
    windows: tuple[Window, ...]


@dataclass(eq=False)
class Instance:
    map: ObstacleMap
    depot: Point
    v_max: float
    d_max: float
    n_agt: int
    targets: tuple[Target, ...]

    @property
    def n_tar(self) -> int:
        return len(self.targets)

    @cached_property
    def world(self) -> World:
        return World(self.map)

    def demand(self, i: int) -> float:
        return 0.0 if i == DEPOT else self.targets[i - 1].demand

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.map == other.map
            and tuple(self.depot) == tuple(other.depot)
            and self.v_max == other.v_max
            and self.d_max == other.d_max
            and self.n_agt == other.n_agt
            and self.targets == other.targets
        )

    __hash__ = None


@dataclass(frozen=True)
class TargetWindow:
    """A target paired with one of its windows; target 0 is the depot."""

    id: int
    target: int
    window: int
    t_lo: float
    t_hi: float
    start: Point
    vel: Point

    def position(self, t: float) -> Point:
        if self.vel == (0.0, 0.0):
            return self.start
        dt = t - self.t_lo
        return (self.start[0] + self.vel[0] * dt, self.start[1] + self.vel[1] * dt)

    @property
    def end(self) -> Point:
        return self.position(self.t_hi) if math.isfinite(self.t_hi) else self.start

    @property
    def speed(self) -> float:
        return math.hypot(*self.vel)

    @property
    def is_depot(self) -> bool:
        return self.target == DEPOT


# ---------------------------------------------------------------------------
# JSON

def _pt(v, what) -> Point:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ParseError(f"{what} must be a pair of numbers")
    return (float(v[0]), float(v[1]))


def parse_instance(text: str) -> Instance:
    try:
        raw = json.loads(text)
        inst = Instance(
            map=load_map(raw["map"]),
            depot=_pt(raw["depot"], "depot"),
            v_max=float(raw["v_max"]),
            d_max=float(raw["d_max"]),
            n_agt=int(raw["n_agt"]),
            targets=tuple(
                Target(
                    demand=float(t["demand"]),
                    windows=tuple(
                        Window(
                            float(w["t_lo"]),
                            float(w["t_hi"]),
                            _pt(w["start"], "window start"),
                            _pt(w["vel"], "window vel"),
                        )
                        for w in t["windows"]
                    ),
                )
                for t in raw["targets"]
            ),
        )
    except MTVRPOError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed instance: {exc}") from exc
    validate_instance(inst)
    return inst


def instance_to_dict(inst: Instance) -> dict:
    return {
        "map": dump_map(inst.map),
        "depot": list(inst.depot),
        "v_max": inst.v_max,
        "d_max": inst.d_max,
        "n_agt": inst.n_agt,
        "targets": [
            {
                "demand": t.demand,
                "windows": [
                    {"t_lo": w.t_lo, "t_hi": w.t_hi, "start": list(w.start), "vel": list(w.vel)}
                    for w in t.windows
                ],
            }
            for t in inst.targets
        ],
    }


def serialize_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1)


def validate_instance(inst: Instance) -> None:
    world = inst.world
    if inst.n_agt < 1:
        raise ValidationError("n_agt must be a positive integer")
    if not inst.v_max > 0:
        raise ValidationError("v_max must be positive")
    if inst.d_max < 0:
        raise ValidationError("d_max must be nonnegative")
    if not world.is_free(inst.depot):
        raise ValidationError("depot is not in free space")
    for i, tar in enumerate(inst.targets, start=1):
        if tar.demand < 0:
            raise ValidationError(f"target {i}: demand must be nonnegative")
        if not tar.windows:
            raise ValidationError(f"target {i}: at least one window required")
        prev_hi = -math.inf
        for j, w in enumerate(tar.windows, start=1):
            if not (math.isfinite(w.t_lo) and math.isfinite(w.t_hi)):
                raise ValidationError(f"target {i} window {j}: times must be finite")
            if not w.t_lo < w.t_hi:
                raise ValidationError(f"target {i} window {j}: t_lo must be below t_hi")
            if w.t_lo < 0:
                raise ValidationError(f"target {i} window {j}: t_lo must be nonnegative")
            if w.t_lo <= prev_hi:
                raise ValidationError(f"target {i}: windows must be sorted and non-overlapping")
            prev_hi = w.t_hi
            if w.speed > inst.v_max + 1e-12:
                raise ValidationError("window speed exceeds v_max")
            if not (world.is_free(w.start) and world.is_free(w.end)):
                raise ValidationError(f"target {i} window {j}: endpoints not in free space")
            if not world.segment_free(w.start, w.end):
                raise ValidationError(f"target {i} window {j}: trajectory crosses an obstacle")


# ---------------------------------------------------------------------------
# generator

def _generate_map(rng: np.random.Generator, resolution: int, side: float) -> ObstacleMap:
    blocked = np.zeros((resolution, resolution), dtype=bool)
    n_blocks = max(2, resolution // 4)
    big = max(1, resolution // 6)
    for _ in range(n_blocks):
        h, w = rng.integers(1, big + 1, size=2)
        r, c = rng.integers(0, resolution - h + 1), rng.integers(0, resolution - w + 1)
        blocked[r : r + h, c : c + w] = True
    if blocked.all():
        blocked[0, 0] = False
    return ObstacleMap(resolution, resolution, side / resolution, blocked)


def _keep_component(m: ObstacleMap, cell: tuple[int, int]) -> ObstacleMap:
    labels, _ = ndimage.label(~m.blocked)
    blocked = labels != labels[cell]
    return ObstacleMap(m.width_cells, m.height_cells, m.cell_size, blocked)


def generate_instance(
    seed: int,
    n_tar: int,
    resolution: int,
    d_max: float | None = None,
    n_agt: int = 3,
    *,
    side: float = 10.0,
    v_max: float = 4.0,
) -> Instance:
    """Random instance: two windows per target, unit demand, target speeds in [0.5, 1] m/s."""
    if n_tar < 0 or resolution < 1 or n_agt < 1:
        raise ValueError("n_tar, resolution and n_agt must be positive")
    if d_max is None:
        d_max = float(math.ceil(n_tar / n_agt)) if n_tar else 1.0
    rng = np.random.default_rng(seed)
    omap = _generate_map(rng, resolution, side)
    free_cells = np.argwhere(~omap.blocked)
    r, c = free_cells[rng.integers(len(free_cells))]
    omap = _keep_component(omap, (r, c))
    cs = omap.cell_size
    depot = ((c + 0.5) * cs, (r + 0.5) * cs)
    world = World(omap)

    def random_free_point():
        for _ in range(1000):
            p = (float(rng.uniform(0, side)), float(rng.uniform(0, side)))
            if world.is_free(p):
                return p
        raise GenerationFailed("could not sample a free point")

    def heading(speed):
        a = rng.uniform(0, 2 * math.pi)
        return (speed * math.cos(a), speed * math.sin(a))

    def ok_segment(p, q):
        return world.is_free(p) and world.is_free(q) and world.segment_free(p, q)

    def reachable(w: Window):
        d = world.spatial_distance(depot, w.end)
        return d <= v_max * w.t_hi

    targets = []
    for _ in range(n_tar):
        for _attempt in range(1000):
            t1 = rng.uniform(0.0, 6.0)
            len1 = rng.uniform(2.0, 5.0)
            gap = rng.uniform(0.1, 0.5) * len1
            len2 = rng.uniform(2.0, 5.0)
            s1 = random_free_point()
            v1 = heading(rng.uniform(0.5, 1.0))
            w1 = Window(float(t1), float(t1 + len1), s1, v1)
            if not ok_segment(w1.start, w1.end):
                continue
            drift = heading(rng.uniform(0.5, 1.0))
            s2 = (w1.end[0] + drift[0] * gap, w1.end[1] + drift[1] * gap)
            t2 = w1.t_hi + gap
            w2 = Window(float(t2), float(t2 + len2), s2, heading(rng.uniform(0.5, 1.0)))
            if not ok_segment(w2.start, w2.end):
                continue
            if not (reachable(w1) and reachable(w2)):
                continue
            targets.append(Target(1.0, (w1, w2)))
            break
        else:
            raise GenerationFailed("window rejection sampling exhausted 1000 attempts")
    inst = Instance(omap, depot, float(v_max), float(d_max), int(n_agt), tuple(targets))
    inst.__dict__["world"] = world
    validate_instance(inst)
    return inst


# ---------------------------------------------------------------------------
# target-window graph

@dataclass(eq=False)
class TWGraph:
    nodes: list[TargetWindow]
    windows_of: dict[int, list[int]]
    lfdt: dict[tuple[int, int], float] = field(default_factory=dict)

    def edges(self):
        return self.lfdt.keys()

    def successors(self, u: int) -> list[int]:
        tu = self.nodes[u].target
        return [v.id for v in self.nodes if v.target != tu]


def target_windows(inst: Instance) -> tuple[list[TargetWindow], dict[int, list[int]]]:
    nodes = [TargetWindow(0, DEPOT, 1, 0.0, math.inf, tuple(inst.depot), (0.0, 0.0))]
    windows_of: dict[int, list[int]] = {DEPOT: [0]}
    for i, tar in enumerate(inst.targets, start=1):
        windows_of[i] = []
        for j, w in enumerate(tar.windows, start=1):
            nid = len(nodes)
            nodes.append(TargetWindow(nid, i, j, w.t_lo, w.t_hi, tuple(w.start), tuple(w.vel)))
            windows_of[i].append(nid)
    return nodes, windows_of


def build_tw_graph(inst: Instance, kin: "Kinematics") -> TWGraph:
    nodes, windows_of = target_windows(inst)
    g = TWGraph(nodes, windows_of)
    for a in nodes:
        for b in nodes:
            if a.target == b.target:
                continue
            t = kin.lfdt(a, b, b.t_hi)
            g.lfdt[(a.id, b.id)] = -math.inf if t is None else t
    return g
