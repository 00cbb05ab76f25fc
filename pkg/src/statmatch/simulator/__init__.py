"""Continuous-time simulation of the matching market and the weak reference chains.

The event loop lives in a compiled kernel (``_kernel``) with a pure-Python
mirror (``_pykernel``).  The compiled one is used when importable, unless
``SML_PURE_PYTHON=1`` is set.  Both consume the same uniform stream and
return identical tallies.

Randomness: replication ``r`` of a run seeded with ``seed`` uses
``numpy.random.Generator(PCG64(SeedSequence([seed, r])))``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np
from scipy import stats

from ..instance import BOT, NONE, TOP, ProblemInstance
from ..lp import LpSolution, ProposalMatrix

from . import _pykernel

if os.environ.get("SML_PURE_PYTHON", "") not in ("", "0"):
    _kernel = _pykernel
else:
    try:
        from . import _kernel
    except ImportError:  # extension not built
        _kernel = _pykernel

KERNEL = _kernel.NAME
DEFAULT_BATCHES = 32
DEFAULT_BURN_FRACTION = 0.2
HIST_MAX = 64


class SimulationError(RuntimeError):
    pass


class PolicyKind(str, Enum):
    CORRELATED_PROPOSALS = "correlated"
    BALANCED_GREEDY = "balanced-greedy"
    GREEDY_MAX_REWARD = "greedy"
    NO_MATCH = "no-match"


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    proposals: ProposalMatrix | None = None
    edge_filter: frozenset | None = None

    def usable(self, inst: ProblemInstance):
        edges = inst.edges
        if self.edge_filter is not None:
            edges = [e for e in edges if e in self.edge_filter]
        return edges


def correlated(proposals: ProposalMatrix, edge_filter=None) -> Policy:
    return Policy(PolicyKind.CORRELATED_PROPOSALS, proposals, _frozen(edge_filter))


def greedy(edge_filter=None) -> Policy:
    return Policy(PolicyKind.GREEDY_MAX_REWARD, None, _frozen(edge_filter))


def balanced_greedy(edge_filter=None) -> Policy:
    return Policy(PolicyKind.BALANCED_GREEDY, None, _frozen(edge_filter))


NO_MATCH = Policy(PolicyKind.NO_MATCH)


def _frozen(edges):
    return None if edges is None else frozenset(edges)


def _csr(inst: ProblemInstance, policy: Policy):
    """Per-online-type candidate lists in the order the policy scans them."""
    kind = PolicyKind(policy.kind)
    edges = inst.edges
    eindex = {e: k for k, e in enumerate(edges)}
    rows = [[] for _ in range(inst.n_online)]
    if kind is PolicyKind.NO_MATCH:
        mode = 0
    elif kind is PolicyKind.CORRELATED_PROPOSALS:
        if policy.proposals is None:
            raise SimulationError("correlated proposals need a ProposalMatrix")
        mode = 1
        P = policy.proposals
        for (i, j) in policy.usable(inst):
            if P[(i, j)] > 0:  # edges with x_ij = 0 never propose
                rows[j].append((-inst.rewards[(i, j)], i, P[(i, j)]))
    elif kind is PolicyKind.GREEDY_MAX_REWARD:
        mode = 2
        for (i, j) in policy.usable(inst):
            rows[j].append((-inst.rewards[(i, j)], i, 1.0))
    else:
        mode = 2
        bad = [t.id for t in inst.offline if t.section == NONE]
        if bad:
            raise SimulationError(f"balanced greedy needs TOP/BOT labels; unlabeled offline types {bad[:5]}")
        for (i, j) in policy.usable(inst):
            rows[j].append((0 if inst.offline[i].section == TOP else 1, i, 1.0))
    indptr, nbr, prob, rew, eid = [0], [], [], [], []
    for j, row in enumerate(rows):
        for _, i, p in sorted(row, key=lambda e: (e[0], e[1])):
            nbr.append(i)
            prob.append(p)
            rew.append(inst.rewards[(i, j)])
            eid.append(eindex[(i, j)])
        indptr.append(len(nbr))
    return mode, (np.array(indptr, dtype=np.int_), np.array(nbr, dtype=np.int_),
                  np.array(prob, dtype=float), np.array(rew, dtype=float), np.array(eid, dtype=np.int_))


# --------------------------------------------------------------------------
# batch means

def batch_ci(values, level: float = 0.95) -> tuple[float, float]:
    """Mean and t-based half-width of the per-batch (or per-replication) values."""
    v = np.asarray(values, dtype=float)
    m = float(v.mean())
    if len(v) < 2:
        return m, math.inf
    half = stats.t.ppf(0.5 + level / 2, len(v) - 1) * v.std(ddof=1) / math.sqrt(len(v))
    return m, float(half)


def _ci_map(keys, per_batch):
    out, ci = {}, {}
    for k, key in enumerate(keys):
        out[key], ci[key] = batch_ci(per_batch[:, k])
    return out, ci


def rng_for(seed: int, r: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, r])))


@dataclass(frozen=True)
class SimEstimate:
    policy: str
    seed: int
    horizon: float
    burn_in: float
    batches: int
    reward_rate: float
    reward_rate_ci: float
    match_rates: Mapping = field(repr=False)
    match_rates_ci: Mapping = field(repr=False)
    abandon_rates: Mapping = field(repr=False)
    abandon_rates_ci: Mapping = field(repr=False)
    per_online_match_prob: Mapping = field(repr=False)
    online_match_rate: Mapping = field(repr=False)
    online_match_rate_ci: Mapping = field(repr=False)
    outflow_rates: Mapping = field(repr=False)
    outflow_rates_ci: Mapping = field(repr=False)
    pasta_gap: Mapping = field(repr=False)
    pasta_gap_ci: Mapping = field(repr=False)
    mean_queue: Mapping = field(repr=False)
    mean_queue_ci: Mapping = field(repr=False)
    queue_hist: np.ndarray = field(repr=False)
    n_events: int = 0
    replication: int = 0

    def queue_distribution(self, i: int) -> np.ndarray:
        """Time-fraction of ``Q_i = k`` for ``k < HIST_MAX``; last bin is ``>= HIST_MAX``."""
        h = self.queue_hist[i]
        return h / h.sum()


def _validate_run(horizon, burn_in, batches):
    if not (horizon > 0 and 0 <= burn_in < horizon):
        raise ValueError("need horizon > burn_in >= 0")
    if batches < 2:
        raise ValueError("need at least 2 batches")


def simulate(inst: ProblemInstance, policy: Policy, horizon: float, burn_in: float | None = None,
             seed: int = 0, batches: int = DEFAULT_BATCHES, replication: int = 0) -> SimEstimate:
    """Long-run rates of one replication, estimated on ``[burn_in, horizon]``."""
    if burn_in is None:
        burn_in = DEFAULT_BURN_FRACTION * horizon
    _validate_run(horizon, burn_in, batches)
    mode, (indptr, nbr, prob, rew, eid) = _csr(inst, policy)
    lam, mu, gamma = inst.lam, inst.mu, inst.gamma
    if not np.isfinite(lam.sum() + gamma.sum() + mu.sum()):
        raise SimulationError("rate overflow")
    edges = inst.edges
    res = _kernel.market(lam, mu, gamma, indptr, nbr, prob, rew, eid, len(edges), mode,
                         float(horizon), float(burn_in), int(batches), HIST_MAX,
                         rng_for(seed, replication))
    L = (horizon - burn_in) / batches
    reward, rci = batch_ci(res["reward"] / L)
    xm, xm_ci = _ci_map(edges, res["match"] / L)
    xa, xa_ci = _ci_map(range(inst.n_offline), res["abandon"] / L)

    out_b = res["abandon"].copy()
    for k, (i, j) in enumerate(edges):
        out_b[:, i] += res["match"][:, k]
    outflow, outflow_ci = _ci_map(range(inst.n_offline), out_b / L)
    on_rate, on_ci = _ci_map(range(inst.n_online), res["matched_on"] / L)

    arrivals = res["arrive_on"].sum(axis=0)
    prob_on = {j: (res["matched_on"][:, j].sum() / arrivals[j] if arrivals[j] else 0.0)
               for j in range(inst.n_online)}
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(res["arrive_on"] > 0, res["matched_on"] / np.maximum(res["arrive_on"], 1), 0.0)
    gap_b = res["matched_on"] / L - frac * gamma
    gap, gap_ci = _ci_map(range(inst.n_online), gap_b)
    mq, mq_ci = _ci_map(range(inst.n_offline), res["qarea"] / L)
    return SimEstimate(
        policy=PolicyKind(policy.kind).value, seed=seed, horizon=float(horizon), burn_in=float(burn_in),
        batches=batches, reward_rate=reward, reward_rate_ci=rci, match_rates=xm, match_rates_ci=xm_ci,
        abandon_rates=xa, abandon_rates_ci=xa_ci, per_online_match_prob=prob_on,
        online_match_rate=on_rate, online_match_rate_ci=on_ci, outflow_rates=outflow,
        outflow_rates_ci=outflow_ci, pasta_gap=gap, pasta_gap_ci=gap_ci, mean_queue=mq,
        mean_queue_ci=mq_ci, queue_hist=res["hist"], n_events=int(res["n_events"]),
        replication=replication)


def mean_queue_lengths(inst: ProblemInstance, policy: Policy, horizon: float, burn_in: float | None = None,
                       seed: int = 0, batches: int = DEFAULT_BATCHES):
    """Time-average queue length per offline type and batch-means half-widths."""
    est = simulate(inst, policy, horizon, burn_in, seed, batches)
    return dict(est.mean_queue), dict(est.mean_queue_ci)


# --------------------------------------------------------------------------
# sanity checks on an estimate

def flow_violations(inst: ProblemInstance, est: SimEstimate, k: float = 3.0, slack: float = 0.0) -> list[str]:
    """Offline types whose outflow misses ``lambda_i`` by more than ``k`` half-widths."""
    bad = []
    for i, t in enumerate(inst.offline):
        if abs(est.outflow_rates[i] - t.lam) > k * est.outflow_rates_ci[i] + slack:
            bad.append(f"offline {i}: outflow {est.outflow_rates[i]:.6g} vs lambda {t.lam:.6g}")
    return bad


def pasta_violations(inst: ProblemInstance, est: SimEstimate, k: float = 3.0, slack: float = 1e-12) -> list[str]:
    """Online types where ``gamma_j * Pr[matched]`` and the matched rate disagree."""
    bad = []
    for j, on in enumerate(inst.online):
        a = on.gamma * est.per_online_match_prob[j]
        b = est.online_match_rate[j]
        if abs(a - b) > k * max(est.pasta_gap_ci[j], est.online_match_rate_ci[j]) + slack:
            bad.append(f"online {j}: gamma*P {a:.6g} vs rate {b:.6g}")
    return bad


def availability_violations(inst: ProblemInstance, est: SimEstimate, k: float = 3.0) -> list[str]:
    from ..lp import availability

    bad = []
    for j, on in enumerate(inst.online):
        cap = on.gamma * availability(sum(inst.offline[i].lam / inst.offline[i].mu
                                          for i in inst.offline_neighbors(j)))
        if est.online_match_rate[j] > cap + k * est.online_match_rate_ci[j]:
            bad.append(f"online {j}: rate {est.online_match_rate[j]:.6g} above cap {cap:.6g}")
    return bad


def total_variation(est: SimEstimate, i: int, pmf: np.ndarray) -> float:
    """TV distance between the empirical law of ``Q_i`` and ``pmf`` (tail lumped into the last bin)."""
    emp = est.queue_distribution(i)
    ref = np.zeros_like(emp)
    n = min(len(pmf), len(ref) - 1)
    ref[:n] = pmf[:n]
    ref[-1] += max(0.0, 1.0 - ref[:-1].sum())
    return 0.5 * float(np.abs(emp - ref).sum())


# --------------------------------------------------------------------------
# replications

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SML_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


def replicate(inst: ProblemInstance, policy: Policy, reps: int, horizon: float, burn_in=None,
              seed: int = 0, batches: int = DEFAULT_BATCHES) -> list[SimEstimate]:
    """Independent replications ``r = 0..reps-1``, returned in replication order."""
    if reps < 1:
        raise ValueError("reps must be >= 1")

    def one(r):
        return simulate(inst, policy, horizon, burn_in, seed, batches, replication=r)

    n = min(_threads(), reps)
    if n == 1:
        return [one(r) for r in range(reps)]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(one, range(reps)))


@dataclass(frozen=True)
class RatioEstimate:
    ratio: float
    ci: float
    reward_rate: float
    reward_rate_ci: float
    objective: float
    runs: tuple = field(repr=False, default=())


def estimate_ratio(inst: ProblemInstance, policy: Policy, sol: LpSolution, reps: int, horizon: float,
                   burn_in=None, seed: int = 0, batches: int = DEFAULT_BATCHES) -> RatioEstimate:
    """Mean reward rate over replications divided by the LP objective.

    The half-width is the t-interval over replication means (batch-means
    within a single replication), scaled by the objective.
    """
    if not sol.objective > 0:
        raise ValueError("LP objective must be positive")
    runs = replicate(inst, policy, reps, horizon, burn_in, seed, batches)
    if reps > 1:
        m, half = batch_ci([e.reward_rate for e in runs])
    else:
        m, half = runs[0].reward_rate, runs[0].reward_rate_ci
    return RatioEstimate(m / sol.objective, half / sol.objective, m, half, sol.objective, tuple(runs))


# --------------------------------------------------------------------------
# weak chains

@dataclass(frozen=True)
class WeakChainEstimate:
    te_prob: Mapping
    te_prob_ci: Mapping
    empty_prob: Mapping
    empty_prob_ci: Mapping
    mean_queue: Mapping
    mean_queue_ci: Mapping
    horizon: float
    burn_in: float
    seed: int
    batches: int
    n_events: int = 0


def simulate_weak_chains(transformed, horizon: float, burn_in: float | None = None, seed: int = 0,
                         batches: int = DEFAULT_BATCHES, load=None) -> WeakChainEstimate:
    """Simulate the weakly correlated chains of a TOP/BOT-labelled instance.

    ``transformed`` is either a ``TransformedInstance`` (its ``load`` gives
    the TOP death-rate boost) or a bare labelled ``ProblemInstance``, in
    which case ``load`` defaults to ``Gamma_i`` of that instance.
    """
    inst = getattr(transformed, "instance", transformed)
    if load is None:
        load = getattr(transformed, "load", None)
    if load is None:
        load = [inst.gamma_sum(i) for i in range(inst.n_offline)]
    if burn_in is None:
        burn_in = DEFAULT_BURN_FRACTION * horizon
    _validate_run(horizon, burn_in, batches)
    unlabeled = [t.id for t in inst.offline if t.section not in (TOP, BOT)]
    if unlabeled:
        raise SimulationError(f"weak chains need TOP/BOT labels; unlabeled {unlabeled[:5]}")
    j_indptr, j_nbr = [0], []
    for j in range(inst.n_online):
        j_nbr.extend(inst.offline_neighbors(j))
        j_indptr.append(len(j_nbr))
    i_indptr, i_nbr = [0], []
    for i in range(inst.n_offline):
        i_nbr.extend(inst.online_neighbors(i))
        i_indptr.append(len(i_nbr))
    top = np.array([1 if t.section == TOP else 0 for t in inst.offline], dtype=np.int_)
    res = _kernel.weak(inst.lam, inst.mu, np.asarray(load, dtype=float), top,
                       np.array(j_indptr, dtype=np.int_), np.array(j_nbr, dtype=np.int_),
                       np.array(i_indptr, dtype=np.int_), np.array(i_nbr, dtype=np.int_),
                       inst.gamma, float(horizon), float(burn_in), int(batches), rng_for(seed))
    L = (horizon - burn_in) / batches
    te, te_ci = _ci_map(range(inst.n_online), res["te_area"] / L)
    em, em_ci = _ci_map(range(inst.n_online), res["empty_area"] / L)
    mq, mq_ci = _ci_map(range(inst.n_offline), res["qarea"] / L)
    return WeakChainEstimate(te, te_ci, em, em_ci, mq, mq_ci, float(horizon), float(burn_in), seed,
                             batches, int(res["n_events"]))


# --------------------------------------------------------------------------
# output

CSV_COLUMNS = ("policy", "seed", "replication", "horizon", "burn_in", "batches",
               "reward_rate", "ci", "n_events")


def _g(v) -> str:
    return format(float(v), ".9g")


def csv_row(est: SimEstimate) -> list[str]:
    return [est.policy, str(est.seed), str(est.replication), _g(est.horizon), _g(est.burn_in),
            str(est.batches), _g(est.reward_rate), _g(est.reward_rate_ci), str(est.n_events)]


def to_csv(estimates: Iterable[SimEstimate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for e in estimates:
        w.writerow(csv_row(e))
    return buf.getvalue()


def estimate_to_dict(est: SimEstimate) -> dict:
    def edges(m):
        return [{"i": i, "j": j, "x": float(v)} for (i, j), v in sorted(m.items())]

    def nodes(m):
        return [{"id": int(k), "value": float(v)} for k, v in sorted(m.items())]

    return {
        "policy": est.policy, "seed": est.seed, "replication": est.replication,
        "horizon": est.horizon, "burn_in": est.burn_in, "batches": est.batches,
        "reward_rate": est.reward_rate, "reward_rate_ci": est.reward_rate_ci,
        "match_rates": edges(est.match_rates), "match_rates_ci": edges(est.match_rates_ci),
        "abandon_rates": nodes(est.abandon_rates), "abandon_rates_ci": nodes(est.abandon_rates_ci),
        "per_online_match_prob": nodes(est.per_online_match_prob),
        "mean_queue": nodes(est.mean_queue), "n_events": est.n_events,
    }


def estimate_to_json(est: SimEstimate) -> str:
    return json.dumps(estimate_to_dict(est), indent=2, sort_keys=True)
