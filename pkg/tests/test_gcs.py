import math

import numpy as np
import pytest

from mtvrpo.bounds import compute_tmax
from mtvrpo.gcs import DEPOT_GOAL, DEPOT_START, REGION, WINDOW, TourEvaluator, build_gcs, evaluate_tour
from mtvrpo.geometry import World
from mtvrpo.instance import DEPOT, TargetWindow, generate_instance
from mtvrpo.problem import NO_AFFINE, Problem

from conftest import free_map, grid_map, make_instance, moving, stationary


def _two_target_tours(prob: Problem, limit: int):
    out = []
    for a in prob.graph.windows_of[1]:
        for b in prob.graph.windows_of[2]:
            for seq in ((DEPOT, a, b, DEPOT), (DEPOT, b, a, DEPOT)):
                if prob.chain_feasible(seq):
                    out.append(seq)
    return out[:limit]


def _run(prob: Problem, seq, affine: bool = True):
    path = [prob.nodes[u] for u in seq]
    tmax = compute_tmax(seq, prob.graph, prob.kin)
    heur = prob.segs.fit_affine_heuristic(seq) if affine else None
    return evaluate_tour(prob.world, prob.inst.v_max, path, tmax, heur)


def _depot_tour(p):
    d = TargetWindow(0, 0, 1, 0.0, math.inf, p, (0.0, 0.0))
    return [d, d]


def test_build_gcs_free_map():
    inst = make_instance(free_map(5), (0.5, 0.5), [[stationary((2.5, 2.5), 0, 10)]])
    prob = Problem(inst)
    g = build_gcs(prob.world, inst.depot, [prob.nodes[u] for u in (DEPOT, 1, DEPOT)])
    kinds = sorted(n.kind for n in g.nodes)
    assert kinds == sorted([REGION, WINDOW, DEPOT_START, DEPOT_GOAL])
    w = g.window_node[1]
    assert g.adj[w] == [0]
    assert g.adj[g.start] == [0] and g.adj[g.goal] == [0]


def test_build_gcs_separated_rectangles_not_adjacent():
    world = World(grid_map(["..@..", "..@..", "..@.."]))
    g = build_gcs(world, (0.5, 0.5), _depot_tour((0.5, 0.5)))
    for r in world.regions:
        for j in g.adj[r.id]:
            if g.nodes[j].kind != REGION:
                continue
            other = world.regions[j]
            assert (r.xmax <= 2.0) == (other.xmax <= 2.0)


def test_region_adjacency_matches_lattice_sampling():
    world = generate_instance(12, 1, 20).world
    cs = world.map.cell_size
    p = world.regions[0].polygon[0]
    g = build_gcs(world, p, _depot_tour(p))
    R = world.regions
    for a in R:
        nx = int(round((a.xmax - a.xmin) / cs))
        ny = int(round((a.ymax - a.ymin) / cs))
        pts = [(a.xmin + i * cs, a.ymin + j * cs) for i in range(nx + 1) for j in range(ny + 1)]
        for b in R:
            if a.id == b.id:
                continue
            touch = any(b.contains(p, tol=1e-9) for p in pts)
            assert touch == (b.id in g.adj[a.id])
    assert any(len(a) for a in g.adj[: len(R)])


def test_depot_only_tour_costs_zero():
    inst = make_instance(free_map(4), (0.5, 0.5), [[stationary((2, 2), 0, 5)]])
    prob = Problem(inst)
    res = _run(prob, (DEPOT, DEPOT))
    assert res.cost == 0.0


@pytest.mark.parametrize("affine", [True, False])
def test_single_stationary_target_closed_form(affine):
    p, q = (0.5, 0.5), (3.5, 4.5)
    inst = make_instance(free_map(6), p, [[stationary(q, 0, 20)]])
    prob = Problem(inst)
    res = _run(prob, (DEPOT, 1, DEPOT), affine)
    assert res.cost == pytest.approx(2 * math.dist(p, q), abs=1e-6)


def test_first_relaxation_bracketed():
    p, q = (0.5, 0.5), (3.5, 4.5)
    inst = make_instance(free_map(6), p, [[stationary(q, 0, 20)]])
    prob = Problem(inst)
    seq = (DEPOT, 1, DEPOT)
    ev = TourEvaluator(
        prob.world, inst.v_max, [prob.nodes[u] for u in seq],
        compute_tmax(seq, prob.graph, prob.kin), prob.segs.fit_affine_heuristic(seq),
    )
    f, _ = ev.relax((ev.gcs.start, 0), 0)
    d = math.dist(p, q)
    assert d - 1e-6 <= f <= 2 * d + 1e-6


def test_detour_around_wall(wall_map):
    inst = make_instance(wall_map, (0.5, 0.5), [[stationary((5.5, 0.5), 0, 20)]])
    prob = Problem(inst)
    res = _run(prob, (DEPOT, 1, DEPOT))
    d = inst.world.spatial_distance((0.5, 0.5), (5.5, 0.5))
    assert res.cost == pytest.approx(2 * d, abs=1e-5)


def test_modes_agree_and_sandwich():
    checked = 0
    for seed in range(6):
        inst = generate_instance(40 + seed, 2, 12, n_agt=1)
        prob = Problem(inst)
        for seq in _two_target_tours(prob, 2):
            a = _run(prob, seq, True)
            b = _run(prob, seq, False)
            assert a.cost == pytest.approx(b.cost, abs=1e-4)
            assert prob.segs.tour_lower_bound(seq) - 1e-6 <= a.cost <= prob.segs.tour_upper_bound(seq) + 1e-6
            checked += 1
    assert checked >= 4


def _check_trajectory(prob: Problem, seq, res):
    inst = prob.inst
    ks = np.array(res.trajectory.knots)
    assert np.allclose(ks[0], [*inst.depot, 0.0], atol=1e-6)
    assert np.allclose(ks[-1, :2], inst.depot, atol=1e-6)
    assert np.all(np.diff(ks[:, 2]) >= 0)
    steps = np.linalg.norm(np.diff(ks[:, :2], axis=0), axis=1)
    assert np.all(steps <= inst.v_max * np.diff(ks[:, 2]) + 1e-6)
    assert res.trajectory.length == pytest.approx(res.cost, abs=1e-5)
    for a, b in zip(ks, ks[1:]):
        n = max(1, int(np.linalg.norm(b[:2] - a[:2]) / 1e-2))
        for u in np.linspace(0, 1, n + 1):
            p = a[:2] + u * (b[:2] - a[:2])
            assert any(prob.world.is_free((p[0] + dx, p[1] + dy)) for dx in (-1e-6, 0, 1e-6) for dy in (-1e-6, 0, 1e-6))
    assert [(c[0], c[1]) for c in res.trajectory.claims] == [(prob.nodes[u].target, prob.nodes[u].window) for u in seq[1:-1]]
    for (i, j, t), u in zip(res.trajectory.claims, seq[1:-1]):
        w = prob.nodes[u]
        assert w.t_lo - 1e-6 <= t <= w.t_hi + 1e-6
        assert math.dist(res.trajectory.position(t), w.position(t)) <= 1e-5


def test_trajectory_invariants_and_monotone_pops():
    for seed in range(4):
        inst = generate_instance(60 + seed, 2, 15, n_agt=1)
        prob = Problem(inst)
        for seq in _two_target_tours(prob, 2):
            res = _run(prob, seq)
            _check_trajectory(prob, seq, res)
            f = res.popped_f
            assert all(b >= a - 1e-6 for a, b in zip(f, f[1:]))


def test_moving_target_intercepted_on_free_map():
    inst = make_instance(free_map(8), (0.5, 0.5), [[moving((6.0, 1.0), (0.0, 0.8), 1, 6)]])
    prob = Problem(inst, mode=NO_AFFINE)
    seq = (DEPOT, 1, DEPOT)
    res = _run(prob, seq, False)
    _check_trajectory(prob, seq, res)
    # out and back to the closest reachable point of the sweep: straight lines on a free map
    ts = np.linspace(1, 6, 20001)
    w = prob.nodes[1]
    best = min(
        2 * math.dist(inst.depot, w.position(t)) for t in ts if math.dist(inst.depot, w.position(t)) <= 4.0 * t
    )
    assert res.cost == pytest.approx(best, abs=1e-4)
