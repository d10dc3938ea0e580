"""Earliest feasible arrival and latest feasible departure times among obstacles.

Both queries bisect on the interception time. Because no target outruns the agent
inside a window and geodesic distance is 1-Lipschitz, the feasibility margin
``v_max * (t_arr - t_dep) - distance`` is monotone in either time, so the feasible
set is an interval and bisection finds its end.
"""

from __future__ import annotations

import math
import threading

from .geometry import Point, World
from .instance import TargetWindow

TIME_TOL = 1e-6
_BISECT_WIDTH = 1e-7
_MAX_ITER = 60


def _qkey(t: float) -> int | float:
    return round(t * 1e9) if math.isfinite(t) else t


class Kinematics:
    def __init__(self, world: World, v_max: float, cache: bool = True):
        self.world = world
        self.v_max = v_max
        self.cache_enabled = cache
        self._cache: dict = {}
        self._lock = threading.Lock()
        self.queries = 0

    def reach_feasible(self, p: Point, t: float, tw: TargetWindow, t_arr: float) -> bool:
        if t_arr < t:
            return False
        d = self.world.spatial_distance(p, tw.position(t_arr))
        return d <= self.v_max * (t_arr - t) + 1e-12

    # -- cache plumbing

    def _cached(self, kind, a: TargetWindow, b: TargetWindow, t: float, fn):
        if not self.cache_enabled:
            return fn()
        key = (kind, a.id, b.id, _qkey(t))
        hit = self._cache.get(key, self)
        if hit is not self:
            return hit
        val = fn()
        with self._lock:
            self._cache[key] = val
        return val

    # -- queries

    def efat(self, a: TargetWindow, b: TargetWindow, t: float) -> float | None:
        """Earliest time in b's window at which b can be intercepted after leaving a at t."""
        return self._cached("efat", a, b, t, lambda: self._efat(a, b, t))

    def lfdt(self, a: TargetWindow, b: TargetWindow, t_arr: float) -> float | None:
        """Latest time in a's window from which b can still be intercepted at t_arr."""
        return self._cached("lfdt", a, b, t_arr, lambda: self._lfdt(a, b, t_arr))

    def _efat(self, a: TargetWindow, b: TargetWindow, t: float) -> float | None:
        self.queries += 1
        v = self.v_max
        p = a.position(t)
        lo, hi = max(t, b.t_lo), b.t_hi
        if lo > hi:
            return None
        dist = self.world.spatial_distance
        if b.vel == (0.0, 0.0):
            d = dist(p, b.start)
            if not math.isfinite(d):
                return None
            ts = max(lo, t + d / v)
            return ts if ts <= hi else None

        def margin(ts):
            return v * (ts - t) - dist(p, b.position(ts))

        if margin(hi) < 0:
            return None
        if margin(lo) >= 0:
            return lo
        for _ in range(_MAX_ITER):
            if hi - lo <= _BISECT_WIDTH:
                break
            mid = 0.5 * (lo + hi)
            if margin(mid) >= 0:
                hi = mid
            else:
                lo = mid
        return hi

    def _lfdt(self, a: TargetWindow, b: TargetWindow, t_arr: float) -> float | None:
        self.queries += 1
        v = self.v_max
        dist = self.world.spatial_distance
        lo, hi = a.t_lo, min(a.t_hi, t_arr)
        if lo > hi:
            return None
        if not math.isfinite(t_arr):
            # b is the depot: any connected departure works
            d = dist(a.end if math.isfinite(hi) else a.start, b.start)
            return hi if math.isfinite(d) else None
        q = b.position(t_arr)
        if a.vel == (0.0, 0.0):
            d = dist(a.start, q)
            if not math.isfinite(d):
                return None
            ts = min(hi, t_arr - d / v)
            return ts if ts >= lo else None

        def margin(ts):
            return v * (t_arr - ts) - dist(a.position(ts), q)

        if margin(lo) < 0:
            return None
        if margin(hi) >= 0:
            return hi
        for _ in range(_MAX_ITER):
            if hi - lo <= _BISECT_WIDTH:
                break
            mid = 0.5 * (lo + hi)
            if margin(mid) >= 0:
                lo = mid
            else:
                hi = mid
        return lo
