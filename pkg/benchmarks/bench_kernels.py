"""Events per second of the compiled and pure-Python simulation kernels.

    python3 benchmarks/bench_kernels.py [--horizon 2000] [--repeat 3]

Both kernels are run on the same inputs and generator seed; the script
also asserts that their tallies agree exactly.
"""

import argparse
import time

import numpy as np

from statmatch import analytics as an
from statmatch import lp
from statmatch import simulator as sim
from statmatch.instance import example_instance, random_instance
from statmatch.simulator import _pykernel

try:
    from statmatch.simulator import _kernel as _ckernel
except ImportError:
    _ckernel = None


def _market_args(inst, policy, horizon):
    mode, arrs = sim._csr(inst, policy)
    return (inst.lam, inst.mu, inst.gamma, *arrs, len(inst.edges), mode,
            float(horizon), 0.2 * horizon, 32, sim.HIST_MAX)


def _time(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--horizon", type=float, default=2000.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(1)
    rand = random_instance(rng)
    rsol = lp.solve_tlp(rand)
    b3, b3sol = example_instance("B3", 10, with_solution=True)
    tr = an.instance_transformation(b3, b3sol)
    cases = [
        ("random/correlated", rand, sim.correlated(lp.proposal_probabilities(rand, rsol))),
        ("random/greedy", rand, sim.greedy()),
        ("b3/correlated", b3, sim.correlated(lp.proposal_probabilities(b3, b3sol))),
    ]
    print(f"{'case':<22}{'kernel':<8}{'events':>10}{'seconds':>10}{'Mev/s':>8}{'speedup':>9}")
    for name, inst, pol in cases:
        a = _market_args(inst, pol, args.horizon)
        tp, rp = _time(lambda: _pykernel.market(*a, sim.rng_for(0)), args.repeat)
        print(f"{name:<22}{'python':<8}{rp['n_events']:>10}{tp:>10.3f}{rp['n_events'] / tp / 1e6:>8.2f}{'':>9}")
        if _ckernel is not None:
            tc, rc = _time(lambda: _ckernel.market(*a, sim.rng_for(0)), args.repeat)
            assert all(np.array_equal(rp[k], rc[k]) for k in rp), "kernels disagree"
            print(f"{'':<22}{'cython':<8}{rc['n_events']:>10}{tc:>10.3f}"
                  f"{rc['n_events'] / tc / 1e6:>8.2f}{tp / tc:>8.0f}x")

    inst = tr.instance
    j_ptr, j_nbr, i_ptr, i_nbr = [0], [], [0], []
    for j in range(inst.n_online):
        j_nbr += inst.offline_neighbors(j)
        j_ptr.append(len(j_nbr))
    for i in range(inst.n_offline):
        i_nbr += inst.online_neighbors(i)
        i_ptr.append(len(i_nbr))
    top = [1 if t.section == "TOP" else 0 for t in inst.offline]
    wa = (inst.lam, inst.mu, np.array(tr.load), np.array(top), np.array(j_ptr), np.array(j_nbr),
          np.array(i_ptr), np.array(i_nbr), inst.gamma, float(args.horizon), 0.2 * args.horizon, 32)
    tp, rp = _time(lambda: _pykernel.weak(*wa, sim.rng_for(0)), args.repeat)
    print(f"{'b3/weak-chains':<22}{'python':<8}{rp['n_events']:>10}{tp:>10.3f}{rp['n_events'] / tp / 1e6:>8.2f}")
    if _ckernel is not None:
        tc, rc = _time(lambda: _ckernel.weak(*wa, sim.rng_for(0)), args.repeat)
        assert all(np.array_equal(np.asarray(rp[k]), np.asarray(rc[k])) for k in rp), "kernels disagree"
        print(f"{'':<22}{'cython':<8}{rc['n_events']:>10}{tc:>10.3f}"
              f"{rc['n_events'] / tc / 1e6:>8.2f}{tp / tc:>8.0f}x")


if __name__ == "__main__":
    main()
