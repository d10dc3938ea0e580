import numpy as np
import pytest

from mtvrpo.errors import NotIntegral
from mtvrpo.master import coverage_matrix, extract_tours, solve_rmp
from mtvrpo.tour import Tour

from oracles import lp_vertex_min


def ident(u):
    return u  # node u serves target u; 0 is the depot


def _tour(targets, cost):
    return Tour((0, *targets, 0), cost, cost)


def test_single_tour_covering_everything():
    t = _tour([1, 2, 3], 7.5)
    sol = solve_rmp([t], ident, 3, 2)
    assert sol.theta == pytest.approx([1.0])
    assert sol.objective == pytest.approx(7.5)
    assert extract_tours(sol) == [t]


def test_empty_pool_is_infeasible():
    assert solve_rmp([], ident, 2, 1) is None
    assert solve_rmp([_tour([1], 1.0)], ident, 2, 1) is None


def test_artificial_columns_make_it_feasible():
    sol = solve_rmp([_tour([1], 1.0)], ident, 2, 1, artificial_cost=1e5)
    assert sol is not None and sol.uses_artificial and not sol.integral


def test_fractional_solution_raises():
    tours = [_tour([1, 2], 2.0), _tour([2, 3], 2.0), _tour([1, 3], 2.0)]
    sol = solve_rmp(tours, ident, 3, 2)
    assert sol.theta == pytest.approx([0.5, 0.5, 0.5])
    with pytest.raises(NotIntegral):
        extract_tours(sol)


def _check_against_vertices(tours, n_tar, n_agt):
    sol = solve_rmp(tours, ident, n_tar, n_agt)
    alpha = coverage_matrix(tours, ident, n_tar)
    A = np.vstack([-alpha, np.ones((1, len(tours)))])
    b = np.concatenate([-np.ones(n_tar), [n_agt]])
    ref = lp_vertex_min([t.lb for t in tours], A, b)
    if sol is None:
        assert ref == np.inf
        return None
    assert sol.objective == pytest.approx(ref, abs=1e-7)
    # primal feasibility, dual signs, strong duality
    th = sol.theta
    assert th.sum() <= n_agt + 1e-6
    assert np.all(alpha @ th >= 1 - 1e-6)
    d = sol.duals
    assert d.lam0 <= 0 and np.all(d.lam >= 0)
    dual_obj = d.lam.sum() + n_agt * d.lam0
    assert dual_obj <= sol.objective + 1e-5
    assert dual_obj == pytest.approx(sol.objective, abs=1e-5)
    # dual feasibility: no column has negative reduced cost
    red = np.array([t.lb for t in tours]) - d.lam @ alpha - d.lam0
    assert np.all(red >= -1e-6)
    return sol


def test_three_overlapping_tours_match_vertex_enumeration():
    tours = [_tour([1, 2], 5.0), _tour([2, 3], 4.0), _tour([3], 2.5)]
    _check_against_vertices(tours, 3, 2)


def test_random_pools_match_vertex_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(40):
        n_tar = int(rng.integers(2, 4))
        tours = []
        for _k in range(int(rng.integers(2, 5))):
            members = [i for i in range(1, n_tar + 1) if rng.random() < 0.5] or [int(rng.integers(1, n_tar + 1))]
            tours.append(_tour(members, float(rng.uniform(1, 10))))
        _check_against_vertices(tours, n_tar, int(rng.integers(1, 3)))


def test_adding_a_tour_never_raises_the_optimum():
    rng = np.random.default_rng(1)
    tours = [_tour([1, 2, 3], 10.0)]
    prev = solve_rmp(tours, ident, 3, 2).objective
    for _ in range(15):
        members = sorted(set(int(x) for x in rng.integers(1, 4, size=2)))
        tours.append(_tour(members, float(rng.uniform(1, 8))))
        cur = solve_rmp(tours, ident, 3, 2).objective
        assert cur <= prev + 1e-9
        prev = cur


def test_upper_bound_objective():
    t = Tour((0, 1, 0), 2.0, 3.0)
    assert solve_rmp([t], ident, 1, 1, use_lower_bounds=False).objective == pytest.approx(3.0)


def test_integral_extraction_covers():
    tours = [_tour([1], 1.0), _tour([2, 3], 1.0), _tour([1, 2, 3], 5.0)]
    sol = solve_rmp(tours, ident, 3, 2)
    chosen = extract_tours(sol)
    assert sorted(u for t in chosen for u in t.seq if u) == [1, 2, 3]
    assert len(chosen) <= 2
