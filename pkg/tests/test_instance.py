
import numpy as np
import pytest

from statmatch.instance import (BOT, TOP, InstanceError,
                                balance_gap, binary_queue_split, bipartite_reduction,
                                example_instance, from_dict, load_instance, make_instance,
                                random_instance, save_instance, split_offline_type, to_dict,
                                top_bot_split, validate)


def test_validate_clean(one_by_one):
    assert validate(one_by_one) == []


def test_validate_zero_lambda():
    inst = make_instance([1.0, 0.0], [1.0, 1.0], [1.0], {(0, 0): 1.0})
    assert validate(inst) == ["offline 1: lambda must be > 0"]


def test_validate_dangling_edge():
    inst = make_instance([1.0], [1.0], [1.0], {(0, 3): 1.0})
    msgs = validate(inst)
    assert len(msgs) == 1 and "dangling" in msgs[0]


def test_validate_negative_reward_and_gamma():
    inst = make_instance([1.0], [1.0], [-1.0], {(0, 0): -2.0})
    msgs = validate(inst)
    assert any("gamma" in m for m in msgs) and any("reward" in m for m in msgs)


@pytest.mark.parametrize("name", ["B1", "B2", "B3"])
@pytest.mark.parametrize("n", [2, 3, 17, 100, 10_000])
def test_builtins_valid(name, n):
    assert validate(example_instance(name, n)) == []


def test_b1_values():
    inst = example_instance("B1", 50)
    assert inst.n_offline == 50 and inst.n_online == 1
    assert inst.offline[0].lam == pytest.approx(0.02)
    assert inst.online[0].gamma == pytest.approx(4e-4)
    assert set(inst.rewards.values()) == {1.0}


def test_b2_values():
    inst = example_instance("B2", 100)
    assert inst.offline[5].lam == pytest.approx(0.1)
    assert inst.online[0].gamma == pytest.approx(9.0)


def test_b3_values():
    inst, sol = example_instance("B3", 4, with_solution=True)
    assert inst.n_online == 5
    assert inst.online[4].gamma == 1.0
    assert all(inst.rewards[(i, 4)] == 1.0 for i in range(4))
    # explicit zero rewards are real edges
    assert all(inst.rewards[(i, i)] == 0.0 for i in range(4))
    assert (0, 1) not in inst.rewards
    assert sol.x(0, 4) == pytest.approx(0.25) and sol.x_abandon[0] == pytest.approx(0.25)
    assert sol.x(2, 2) == pytest.approx(0.5)


def test_example_errors():
    with pytest.raises(InstanceError):
        example_instance("B9", 5)
    with pytest.raises(InstanceError):
        example_instance("B1", 1)


def test_split_halves():
    inst = make_instance([1.0, 3.0], [2.0, 1.0], [1.0, 2.0], {(0, 0): 1.0, (0, 1): 2.0, (1, 1): 5.0})
    out = split_offline_type(inst, 0, 2)
    assert [t.lam for t in out.offline] == [0.5, 0.5, 3.0]
    assert [t.mu for t in out.offline] == [2.0, 2.0, 1.0]
    assert out.rewards == {(0, 0): 1.0, (0, 1): 2.0, (1, 0): 1.0, (1, 1): 2.0, (2, 1): 5.0}
    assert sum(out.lam) == pytest.approx(sum(inst.lam), abs=0)
    assert validate(out) == []


def test_split_identity(one_by_one):
    out = split_offline_type(one_by_one, 0, 1)
    assert out.offline == one_by_one.offline and out.rewards == one_by_one.rewards


def test_split_errors(one_by_one):
    with pytest.raises(InstanceError):
        split_offline_type(one_by_one, 3, 2)
    with pytest.raises(InstanceError):
        split_offline_type(one_by_one, 0, 0)


def test_binary_queue_split_bound(rng):
    inst = random_instance(rng, 4, 3)
    eps = 0.3
    out, K = binary_queue_split(inst, eps)
    assert out.n_offline == K * inst.n_offline
    assert max(t.lam / t.mu for t in out.offline) <= eps ** 2 + 1e-15
    assert sum(out.lam) == pytest.approx(sum(inst.lam), rel=1e-12)
    # reward multiset per copy is preserved
    assert len(out.rewards) == K * len(inst.rewards)


def test_top_bot_split():
    inst = make_instance([2.0], [1.0], [1.0], {(0, 0): 3.0})
    out = top_bot_split(inst)
    assert [(t.lam, t.section) for t in out.offline] == [(1.0, TOP), (1.0, BOT)]
    assert out.rewards == {(0, 0): 3.0, (1, 0): 3.0}
    with pytest.raises(InstanceError):
        top_bot_split(out)


def test_top_bot_balance(rng):
    for _ in range(20):
        inst = random_instance(rng)
        out = top_bot_split(inst)
        assert len(out.rewards) == 2 * len(inst.rewards)
        for j in range(out.n_online):
            assert abs(balance_gap(out, j)) <= 1e-12


def test_bipartite_reduction_single():
    inst = bipartite_reduction([2.0], [1.0], [[1.0]])
    assert inst.offline[0].lam == 1.0 and inst.online[0].gamma == 1.0
    assert inst.rewards == {(0, 0): 1.0}


def test_bipartite_reduction_zero():
    inst = bipartite_reduction([1.0, 1.0], [1.0, 1.0], np.zeros((2, 2)))
    assert inst.rewards == {}


def test_bipartite_reduction_rates_halved(rng):
    lam = rng.uniform(0.5, 2, 4)
    R = rng.uniform(0, 1, (4, 4))
    R = R + R.T
    np.fill_diagonal(R, 0)
    inst = bipartite_reduction(lam, np.ones(4), R)
    assert np.array_equal(inst.lam, lam / 2) and np.array_equal(inst.gamma, lam / 2)
    assert all(i != j for i, j in inst.rewards)


def test_bipartite_reduction_asymmetric():
    with pytest.raises(InstanceError):
        bipartite_reduction([1.0, 1.0], [1.0, 1.0], [[0, 1], [2, 0]])


def test_json_roundtrip(tmp_path, rng):
    inst = top_bot_split(random_instance(rng))
    p = tmp_path / "inst.json"
    save_instance(inst, p)
    back = load_instance(p)
    assert back.offline == inst.offline and back.online == inst.online and back.rewards == inst.rewards


def test_json_schema_strings_and_names():
    data = {"offline": [{"id": "a", "lambda": "0.1", "mu": "1"}, {"id": "b", "lambda": 2, "mu": 1}],
            "online": [{"id": 7, "gamma": "0.3"}],
            "rewards": [{"i": "a", "j": 7, "r": "1.5"}, {"i": "b", "j": 7, "r": 0}]}
    inst = from_dict(data)
    assert inst.offline[0].lam == 0.1 and inst.online[0].gamma == 0.3
    assert inst.rewards == {(0, 0): 1.5, (1, 0): 0.0}
    assert inst.name("offline", 0) == "a" and inst.name("online", 0) == "7"
    assert to_dict(inst)["rewards"][1]["r"] == 0.0


def test_json_duplicate_key():
    data = {"offline": [{"id": 0, "lambda": 1, "mu": 1}], "online": [{"id": 0, "gamma": 1}],
            "rewards": [{"i": 0, "j": 0, "r": 1}, {"i": 0, "j": 0, "r": 2}]}
    with pytest.raises(InstanceError, match="duplicate"):
        from_dict(data)


def test_json_unknown_id():
    data = {"offline": [{"id": 0, "lambda": 1, "mu": 1}], "online": [{"id": 0, "gamma": 1}],
            "rewards": [{"i": 0, "j": 4, "r": 1}]}
    with pytest.raises(InstanceError):
        from_dict(data)


def test_neighbourhoods():
    inst = example_instance("B3", 3)
    assert inst.offline_neighbors(3) == [0, 1, 2]
    assert inst.online_neighbors(1) == [1, 3]
    assert inst.gamma_sum(1) == pytest.approx(4.0)
