import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from statmatch import lp
from statmatch.instance import bipartite_reduction, example_instance, make_instance, random_instance

E1 = 1 - 1 / math.e


def _star(lam, mu, gamma):
    n = len(lam)
    return make_instance(lam, mu, [gamma], {(i, 0): 1.0 for i in range(n)})


# -- separation oracle ------------------------------------------------------

def test_oracle_zero_point(one_by_one):
    assert lp.separation_oracle(one_by_one, {}, 0) is None


def test_oracle_single_violation(one_by_one):
    H, v = lp.separation_oracle(one_by_one, {(0, 0): 0.9}, 0)
    assert H == (0,)
    assert v == pytest.approx(0.9 - E1, abs=1e-15)
    assert v == pytest.approx(0.2679, abs=1e-4)


def test_oracle_matches_brute_force_n10(rng):
    for _ in range(20):
        inst = _star(rng.uniform(0.2, 3, 10), rng.uniform(0.2, 3, 10), rng.uniform(0.2, 3))
        x = {(i, 0): float(v) for i, v in enumerate(rng.uniform(0, 0.6, 10))}
        _, a = lp.max_prefix_violation(inst, x, 0)
        assert a == pytest.approx(lp.brute_force_violation(inst, x, 0), abs=1e-10)


def test_oracle_brute_force_independent_enumeration(rng):
    # the vectorised brute force agrees with a plain loop over subsets
    import itertools

    inst = _star(rng.uniform(0.2, 3, 6), rng.uniform(0.2, 3, 6), 1.3)
    x = {(i, 0): float(v) for i, v in enumerate(rng.uniform(0, 0.8, 6))}
    best = 0.0
    for k in range(1, 7):
        for H in itertools.combinations(range(6), k):
            best = max(best, lp.subset_violation(inst, x, 0, H))
    assert lp.brute_force_violation(inst, x, 0) == pytest.approx(best, abs=1e-14)


def test_oracle_tie_break_ascending_id():
    inst = _star([1.0, 1.0, 1.0], [1.0, 1.0, 1.0], 1.0)
    H, _ = lp.max_prefix_violation(inst, {(0, 0): 0.9, (1, 0): 0.9, (2, 0): 0.9}, 0)
    assert H == (0, 1, 2)[:len(H)]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2 ** 32 - 1))
def test_oracle_property(n, seed):
    r = np.random.default_rng(seed)
    inst = _star(r.uniform(0.05, 5, n), r.uniform(0.05, 5, n), r.uniform(0.05, 5))
    g = inst.online[0].gamma
    x = {(i, 0): float(v) for i, v in enumerate(r.uniform(0, g, n) * r.random(n))}
    _, a = lp.max_prefix_violation(inst, x, 0)
    assert abs(a - lp.brute_force_violation(inst, x, 0)) <= 1e-10


def test_availability_cap():
    assert lp.availability(800.0) == 1.0
    assert lp.availability(1.0) == pytest.approx(E1)


# -- solving ---------------------------------------------------------------

def test_one_by_one_online(one_by_one):
    sol = lp.solve_tlp(one_by_one, lp.Benchmark.ONLINE)
    assert sol.objective == pytest.approx(0.5, abs=1e-6)
    assert sol.x(0, 0) == pytest.approx(0.5, abs=1e-6)
    assert sol.x_abandon[0] == pytest.approx(0.5, abs=1e-6)


def test_one_by_one_offline(one_by_one):
    sol = lp.solve_tlp(one_by_one, lp.Benchmark.OFFLINE)
    assert sol.objective == pytest.approx(E1, abs=1e-6)


def test_ablated_one_by_one(one_by_one):
    assert lp.solve_tlp_ablated(one_by_one).objective == pytest.approx(0.5, abs=1e-6)


def test_empty_edges():
    inst = make_instance([1.0, 2.0], [1.0, 1.0], [1.0], {})
    assert lp.solve_tlp_ablated(inst).objective == 0.0
    assert lp.solve_tlp(inst).objective == 0.0


def test_b1_bound():
    n = 50
    inst = example_instance("B1", n)
    sol = lp.solve_tlp(inst)
    assert sol.objective <= E1 / n ** 2 * (1 + 1e-6)
    assert lp.check_feasibility(inst, sol) == []


def test_b1_ablated_value():
    n = 50
    inst = example_instance("B1", n)
    v = lp.solve_tlp_ablated(inst).objective
    # the quoted feasible point n/(n^3+n^2) is a lower bound on the ablated optimum;
    # the optimum itself is n*(1 - exp(-1/n)) / n^2 up to (1+o(1))
    assert v >= n / (n ** 3 + n ** 2) * (1 - 1e-6)
    assert v == pytest.approx(n * (1 - math.exp(-1 / n)) / n ** 2, rel=1e-6)
    assert v * n ** 2 == pytest.approx(1.0, abs=0.02)


def test_k3_reduction():
    R = np.ones((3, 3)) - np.eye(3)
    inst = bipartite_reduction([1.0] * 3, [1.0] * 3, R)
    sol = lp.solve_tlp(inst)
    # symmetric optimum: per-edge rate y with 2y <= (1/2 - 2y), so y = 1/8 on 6 edges
    assert sol.objective == pytest.approx(0.75, abs=1e-6)


def test_monotone_and_feasible(rng):
    for _ in range(8):
        inst = random_instance(rng)
        on = lp.solve_tlp(inst, lp.Benchmark.ONLINE)
        off = lp.solve_tlp(inst, lp.Benchmark.OFFLINE)
        abl = lp.solve_tlp_ablated(inst)
        assert on.objective <= off.objective * (1 + 1e-6) + 1e-9
        assert on.objective <= abl.objective * (1 + 1e-6) + 1e-9
        assert lp.check_feasibility(inst, on) == []
        assert lp.check_feasibility(inst, off) == []
        P = lp.proposal_probabilities(inst, on)
        assert all(0 <= p <= 1 for p in P.p.values())
        assert lp.lp_gain(inst, on) == pytest.approx(on.objective, rel=1e-9)


def test_feasibility_detects_violation(one_by_one):
    bad = lp.LpSolution(lp.Benchmark.ONLINE, {(0, 0): 0.9}, {0: 0.1}, 0.9)
    msgs = lp.check_feasibility(one_by_one, bad)
    assert any("availability" in m for m in msgs)
    assert any("per-edge" in m for m in msgs)


def test_nonconvergence(rng):
    inst = example_instance("B1", 20)
    with pytest.raises(lp.NonConvergenceError):
        lp.solve_tlp(inst, max_rounds=0)


# -- proposals and gain ----------------------------------------------------

def test_proposals_one_by_one(one_by_one):
    on = lp.proposal_probabilities(one_by_one, lp.solve_tlp(one_by_one))
    off = lp.proposal_probabilities(one_by_one, lp.solve_tlp(one_by_one, lp.Benchmark.OFFLINE))
    assert on[(0, 0)] == pytest.approx(1.0) and off[(0, 0)] == pytest.approx(1.0)
    assert on[(5, 5)] == 0.0


def test_proposals_zero_edge():
    inst = make_instance([1.0], [1.0], [1.0, 1.0], {(0, 0): 1.0, (0, 1): 1.0})
    sol = lp.LpSolution(lp.Benchmark.ONLINE, {(0, 0): 0.3, (0, 1): 0.0}, {0: 0.7}, 0.3)
    P = lp.proposal_probabilities(inst, sol)
    assert P[(0, 1)] == 0.0 and (0, 1) not in P.p


def test_proposals_errors(one_by_one):
    with pytest.raises(lp.FeasibilityError):
        lp.proposal_probabilities(one_by_one, lp.LpSolution(lp.Benchmark.ONLINE, {(0, 0): 0.5}, {0: 0.0}, 0.5))
    with pytest.raises(lp.FeasibilityError):
        lp.proposal_probabilities(one_by_one, lp.LpSolution(lp.Benchmark.ONLINE, {(0, 0): 0.6}, {0: 0.4}, 0.6))


def test_proposals_clamp(one_by_one):
    sol = lp.LpSolution(lp.Benchmark.ONLINE, {(0, 0): 0.5 + 1e-11}, {0: 0.5}, 0.5)
    assert lp.proposal_probabilities(one_by_one, sol)[(0, 0)] == 1.0


def test_lp_gain_b3():
    n = 10
    inst, sol = example_instance("B3", n, with_solution=True)
    assert lp.lp_gain(inst, sol, {n}) == pytest.approx(1.0)
    assert lp.lp_gain(inst, sol, set()) == 0.0
    assert lp.lp_gain(inst, sol) == pytest.approx(sol.objective)
    with pytest.raises(KeyError):
        lp.lp_gain(inst, sol, {n + 1})


def test_b3_canonical_feasible():
    inst, sol = example_instance("B3", 50, with_solution=True)
    assert lp.check_feasibility(inst, sol) == []
    assert lp.solve_tlp(inst).objective == pytest.approx(1.0, abs=1e-6)


def test_solution_json_roundtrip(tmp_path, rng):
    inst = random_instance(rng)
    sol = lp.solve_tlp(inst)
    p = tmp_path / "sol.json"
    lp.save_solution(sol, p)
    back = lp.load_solution(p)
    assert back.x_match == sol.x_match and back.x_abandon == sol.x_abandon
    assert back.objective == sol.objective and back.benchmark is lp.Benchmark.ONLINE
