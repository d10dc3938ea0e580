"""Independent checker for solution JSON against an instance."""

from __future__ import annotations

import math

import numpy as np

from .instance import Instance

SPEED_TOL = 1e-6
POS_TOL = 1e-6
SAMPLE_STEP = 1e-2
COST_TOL = 1e-5


def _free_with_slack(world, p, tol: float = POS_TOL) -> bool:
    if world.is_free(p):
        return True
    return any(
        world.is_free((p[0] + dx, p[1] + dy)) for dx in (-tol, 0.0, tol) for dy in (-tol, 0.0, tol)
    )


def _position(knots: np.ndarray, t: float) -> np.ndarray:
    ts = knots[:, 2]
    if t <= ts[0]:
        return knots[0, :2]
    if t >= ts[-1]:
        return knots[-1, :2]
    k = int(np.searchsorted(ts, t, side="right")) - 1
    a, b = knots[k], knots[k + 1]
    if b[2] - a[2] <= 0:
        return b[:2]
    u = (t - a[2]) / (b[2] - a[2])
    return a[:2] + u * (b[:2] - a[:2])


def validate_solution(inst: Instance, sol: dict) -> list[str]:
    """Returns a list of violations; empty means the solution is valid."""
    errs: list[str] = []
    status = sol.get("status")
    tours = sol.get("tours") or []
    if status == "INFEASIBLE":
        return [] if not tours else ["INFEASIBLE solution lists tours"]
    if status not in ("OPTIMAL", "TIMEOUT"):
        return [f"unknown status {status!r}"]
    if status == "TIMEOUT" and not tours and inst.n_tar:
        return []
    world = inst.world
    depot = np.array(inst.depot, dtype=float)
    if len(tours) > inst.n_agt:
        errs.append(f"{len(tours)} tours exceed n_agt={inst.n_agt}")
    claimed: dict[int, int] = {}
    total = 0.0
    for k, tour in enumerate(tours):
        tag = f"tour {k}"
        knots = np.asarray(tour.get("trajectory", []), dtype=float).reshape(-1, 3)
        if len(knots) < 1:
            errs.append(f"{tag}: empty trajectory")
            continue
        if np.linalg.norm(knots[0, :2] - depot) > POS_TOL or abs(knots[0, 2]) > POS_TOL:
            errs.append(f"{tag}: does not start at the depot at time 0")
        if np.linalg.norm(knots[-1, :2] - depot) > POS_TOL:
            errs.append(f"{tag}: does not end at the depot")
        length = 0.0
        for a, b in zip(knots, knots[1:]):
            dt = b[2] - a[2]
            d = float(np.linalg.norm(b[:2] - a[:2]))
            length += d
            if dt < -1e-9:
                errs.append(f"{tag}: time decreases at t={a[2]:.6f}")
            if d > inst.v_max * max(dt, 0.0) + SPEED_TOL:
                errs.append(f"{tag}: speed limit exceeded at t={a[2]:.6f}")
            n = max(1, math.ceil(d / SAMPLE_STEP))
            for u in np.linspace(0.0, 1.0, n + 1):
                p = a[:2] + u * (b[:2] - a[:2])
                if not _free_with_slack(world, (float(p[0]), float(p[1]))):
                    errs.append(f"{tag}: collision near ({p[0]:.4f}, {p[1]:.4f})")
                    break
        cost = float(tour.get("cost", math.nan))
        if not abs(cost - length) <= COST_TOL * max(1.0, length):
            errs.append(f"{tag}: cost {cost} differs from trajectory length {length}")
        total += cost
        windows = [tuple(w) for w in tour.get("windows", [])]
        load = 0.0
        seen = set()
        for i, j in windows:
            if not 1 <= i <= inst.n_tar or not 1 <= j <= len(inst.targets[i - 1].windows):
                errs.append(f"{tag}: unknown target-window ({i}, {j})")
                continue
            if i in seen:
                errs.append(f"{tag}: target {i} visited twice")
            seen.add(i)
            load += inst.demand(i)
        if load > inst.d_max + 1e-9:
            errs.append(f"{tag}: demand {load} exceeds d_max={inst.d_max}")
        for c in tour.get("claims", []):
            i, j, t = int(c["target"]), int(c["window"]), float(c["time"])
            if not 1 <= i <= inst.n_tar or not 1 <= j <= len(inst.targets[i - 1].windows):
                errs.append(f"{tag}: claim of unknown target-window ({i}, {j})")
                continue
            if (i, j) not in windows:
                errs.append(f"{tag}: claim ({i}, {j}) not among the tour's windows")
            w = inst.targets[i - 1].windows[j - 1]
            if not (w.t_lo - POS_TOL <= t <= w.t_hi + POS_TOL):
                errs.append(f"{tag}: claim of target {i} at t={t} outside its window")
            q = np.array(w.position(min(max(t, w.t_lo), w.t_hi)))
            if np.linalg.norm(_position(knots, t) - q) > POS_TOL:
                errs.append(f"{tag}: agent not at target {i} when claiming it")
            if i in claimed:
                errs.append(f"target {i} claimed by tours {claimed[i]} and {k}")
            claimed[i] = k
    missing = sorted(set(range(1, inst.n_tar + 1)) - set(claimed))
    if missing:
        errs.append(f"targets never claimed: {missing}")
    tc = sol.get("total_cost")
    if tc is None or not abs(float(tc) - total) <= COST_TOL * max(1.0, total):
        errs.append(f"total_cost {tc} differs from the sum of tour costs {total}")
    return errs
