import os
import subprocess
import sys

import numpy as np
import pytest

from statmatch import analytics as an
from statmatch import lp
from statmatch import simulator as sim
from statmatch.instance import example_instance, random_instance, top_bot_split
from statmatch.simulator import _pykernel

ck = pytest.importorskip("statmatch.simulator._kernel")


def _market(inst, pol, horizon=400.0, seed=0):
    mode, arrs = sim._csr(inst, pol)
    args = (inst.lam, inst.mu, inst.gamma, *arrs, len(inst.edges), mode, horizon, 0.2 * horizon, 32, sim.HIST_MAX)
    return ck.market(*args, sim.rng_for(seed)), _pykernel.market(*args, sim.rng_for(seed))


def _same(a, b):
    assert a.keys() == b.keys()
    for k in a:
        assert np.array_equal(np.asarray(a[k]), np.asarray(b[k])), k


@pytest.mark.parametrize("seed", range(4))
def test_market_identical(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    sol = lp.solve_tlp(inst)
    off = lp.solve_tlp(inst, lp.Benchmark.OFFLINE)
    for pol in (sim.correlated(lp.proposal_probabilities(inst, sol)),
                sim.correlated(lp.proposal_probabilities(inst, off)),
                sim.greedy(), sim.NO_MATCH):
        c, p = _market(inst, pol, seed=seed)
        _same(c, p)
        assert c["n_events"] > 0
    tb = top_bot_split(inst)
    _same(*_market(tb, sim.balanced_greedy(), seed=seed))


def test_market_identical_b3():
    inst, sol = example_instance("B3", 8, with_solution=True)
    _same(*_market(inst, sim.correlated(lp.proposal_probabilities(inst, sol)), horizon=100.0))


def test_weak_identical(monkeypatch):
    inst, sol = example_instance("B3", 12, with_solution=True)
    tr = an.instance_transformation(inst, sol)
    a = sim.simulate_weak_chains(tr, 300.0, seed=5)
    monkeypatch.setattr(sim, "_kernel", _pykernel)
    b = sim.simulate_weak_chains(tr, 300.0, seed=5)
    assert a == b and a.n_events > 0


def test_simulate_identical_through_api(monkeypatch):
    inst = random_instance(np.random.default_rng(8))
    sol = lp.solve_tlp(inst)
    pol = sim.correlated(lp.proposal_probabilities(inst, sol))
    a = sim.simulate(inst, pol, 300.0, seed=2)
    monkeypatch.setattr(sim, "_kernel", _pykernel)
    b = sim.simulate(inst, pol, 300.0, seed=2)
    assert sim.estimate_to_dict(a) == sim.estimate_to_dict(b)


def test_uniform_stream_matches_generator():
    rng = sim.rng_for(3)
    u = _pykernel._Uniforms(rng)
    first = [u() for _ in range(5000)]
    assert first == sim.rng_for(3).random(5000).tolist()


@pytest.mark.parametrize("flag,expected", [("1", "python"), ("0", "cython")])
def test_kernel_selection(flag, expected):
    env = dict(os.environ, SML_PURE_PYTHON=flag)
    out = subprocess.run([sys.executable, "-c", "import statmatch.simulator as s; print(s.KERNEL)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected
