import copy
import math

import pytest

from mtvrpo.instance import generate_instance
from mtvrpo.solver import solve
from mtvrpo.validate import validate_solution

from conftest import make_instance, stationary


@pytest.fixture(scope="module")
def solved():
    inst = generate_instance(1, 3, 10, n_agt=2)
    return inst, solve(inst).to_dict()


def test_solver_output_is_valid(solved):
    inst, sol = solved
    assert validate_solution(inst, sol) == []


def _first_error(inst, sol, needle):
    errs = validate_solution(inst, sol)
    assert any(needle in e for e in errs), errs


def test_detects_speeding(solved):
    inst, sol = solved
    bad = copy.deepcopy(sol)
    traj = bad["tours"][0]["trajectory"]
    k = max(range(1, len(traj)), key=lambda k: math.dist(traj[k][:2], traj[k - 1][:2]))
    traj[k][2] = traj[k - 1][2] + 1e-3
    _first_error(inst, bad, "speed")


def test_detects_missing_claim(solved):
    inst, sol = solved
    bad = copy.deepcopy(sol)
    bad["tours"][0]["claims"] = bad["tours"][0]["claims"][1:]
    _first_error(inst, bad, "never claimed")


def test_detects_wrong_total(solved):
    inst, sol = solved
    bad = copy.deepcopy(sol)
    bad["total_cost"] += 1.0
    _first_error(inst, bad, "total_cost")


def test_detects_claim_outside_window(solved):
    inst, sol = solved
    bad = copy.deepcopy(sol)
    c = bad["tours"][0]["claims"][0]
    w = inst.targets[c["target"] - 1].windows[c["window"] - 1]
    c["time"] = w.t_hi + 1.0
    _first_error(inst, bad, "outside its window")


def test_detects_too_many_tours(solved):
    inst, sol = solved
    bad = copy.deepcopy(sol)
    bad["tours"] = bad["tours"] + [copy.deepcopy(bad["tours"][0])] * 2
    _first_error(inst, bad, "exceed n_agt")


def test_detects_capacity(solved):
    inst, sol = solved
    bad = copy.deepcopy(sol)
    windows = [w for t in bad["tours"] for w in t["windows"]]
    bad["tours"][0]["windows"] = windows
    _first_error(inst, bad, "exceeds d_max")


def test_detects_collision(wall_map):
    inst = make_instance(wall_map, (0.5, 0.5), [[stationary((5.5, 0.5), 0, 20)]])
    d = math.dist((0.5, 0.5), (5.5, 0.5))
    sol = {
        "status": "OPTIMAL",
        "total_cost": 2 * d,
        "tours": [
            {
                "windows": [[1, 1]],
                "cost": 2 * d,
                "trajectory": [[0.5, 0.5, 0.0], [5.5, 0.5, 2.0], [0.5, 0.5, 4.0]],
                "claims": [{"target": 1, "window": 1, "time": 2.0}],
            }
        ],
    }
    _first_error(inst, sol, "collision")


def test_infeasible_status_without_tours_is_valid():
    inst = generate_instance(1, 2, 10)
    assert validate_solution(inst, {"status": "INFEASIBLE", "total_cost": None, "tours": []}) == []
    assert validate_solution(inst, {"status": "BROKEN"}) != []
