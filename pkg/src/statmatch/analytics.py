"""Closed-form stationary quantities and the hard/easy classification pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np
from scipy import stats

from .instance import BOT, TOP, ProblemInstance, top_bot_split
from .lp import (Benchmark, LpSolution, ProposalMatrix, availability, check_feasibility,
                 lp_gain, proposal_probabilities)


class Verdict(str, Enum):
    EASY_CASE1 = "EASY_CASE1"
    EASY_CASE2 = "EASY_CASE2"
    EASY_CASE3 = "EASY_CASE3"
    HARD = "HARD"
    NONE = "NONE"


class TransformError(ValueError):
    pass


# --------------------------------------------------------------------------
# birth-death / Poisson

@dataclass(frozen=True)
class PoissonLaw:
    """Stationary law of a queue with constant births and linear deaths."""

    rate: float

    def pmf(self, k):
        return stats.poisson.pmf(k, self.rate)

    @property
    def mean(self) -> float:
        return self.rate

    def truncated(self, tol: float = 1e-12) -> np.ndarray:
        """pmf on ``0..K`` with ``K`` chosen so the dropped tail is below ``tol``."""
        K = int(stats.poisson.isf(tol, self.rate)) + 1
        return self.pmf(np.arange(K + 1))


def birth_death_stationary(lam: float, mu: float) -> PoissonLaw:
    if not (lam > 0 and mu > 0):
        raise ValueError("rates must be positive")
    return PoissonLaw(lam / mu)


def presence_ratio(x):
    """``x / (x + 1 - exp(-x))``; increasing on (0, inf) with limit 1/2 at 0."""
    x = np.asarray(x, dtype=float)
    return x / (x - np.expm1(-x))


# --------------------------------------------------------------------------
# probability and reward bounds

def availability_upper_bound(inst: ProblemInstance, H: Iterable[int]) -> float:
    """Stationary probability that some offline type of ``H`` is present."""
    H = list(H)
    if not H:
        raise ValueError("H must be nonempty")
    return availability(sum(inst.offline[i].lam / inst.offline[i].mu for i in H))


def _edges_of(inst: ProblemInstance, sol: LpSolution, j: int):
    if not 0 <= j < inst.n_online:
        raise KeyError(f"unknown online id {j}")
    return [(i, inst.rewards[(i, j)], sol.x(i, j)) for i in inst.offline_neighbors(j)]


def match_prob_lower_bound(inst: ProblemInstance, sol: LpSolution, j: int, w: float) -> float:
    """``1 - exp(-sum_{i: r_ij >= w} x_ij / gamma_j)``."""
    z = sum(x for _, r, x in _edges_of(inst, sol, j) if r >= w) / inst.online[j].gamma
    return -math.expm1(-z)


def alg1_reward_lower_bound(inst: ProblemInstance, sol: LpSolution) -> float:
    """Exact integral of the per-threshold match bound over reward levels, summed over ``j``."""
    total = 0.0
    for j, on in enumerate(inst.online):
        edges = [(r, x) for _, r, x in _edges_of(inst, sol, j) if x > 0]
        levels = sorted({r for r, _ in edges}, reverse=True)
        for k, w in enumerate(levels):
            nxt = levels[k + 1] if k + 1 < len(levels) else 0.0
            z = sum(x for r, x in edges if r >= w) / on.gamma
            total += on.gamma * (w - nxt) * -math.expm1(-z)
    return total


def indep_chain_empty_probability(inst: ProblemInstance, sol: LpSolution, j: int) -> float:
    """Probability that no neighbour of ``j`` is queued when each queue is ``Pois(x_a/mu)``."""
    s = sum(sol.x_abandon[i] / inst.offline[i].mu for i, _, x in _edges_of(inst, sol, j) if x > 0)
    return math.exp(-s)


# --------------------------------------------------------------------------
# classification

def windowed_gain(edges, w: float, eps: float) -> float:
    return sum(r * x for r, x in edges if w <= r <= w * (1 + eps))


def _best_window(edges, eps: float):
    cands = sorted({r for r, _ in edges} | {r / (1 + eps) for r, _ in edges})
    best_w, best = None, -1.0
    for w in cands:
        g = windowed_gain(edges, w, eps)
        if g > best:
            best_w, best = w, g
    return best_w, best


@dataclass(frozen=True)
class TypeReport:
    case1: bool
    case2: bool
    case3: bool
    hard_i: bool
    hard_ii: bool
    r_threshold: float | None
    gain: float
    saturation: float


@dataclass(frozen=True)
class Classification:
    verdicts: Mapping[int, Verdict]
    r_threshold: Mapping[int, float | None]
    params: tuple[float, float]
    gain_share: Mapping[int, float]
    flagged: frozenset = frozenset()
    reports: Mapping[int, TypeReport] = field(default_factory=dict, repr=False)

    @property
    def hard(self) -> list[int]:
        return [j for j, v in self.verdicts.items() if v is Verdict.HARD]


def classify(inst: ProblemInstance, sol: LpSolution, eps: float = 0.05, eps_prime: float = 0.05,
             proposals: ProposalMatrix | None = None) -> Classification:
    """Label each online type as one of the three easy cases or hard.

    Hard takes priority whenever both hardness conditions hold; otherwise the
    lowest-numbered easy case that applies is reported.  A type meeting
    neither is reported hard and listed in ``flagged``.
    """
    if not (0 < eps < 0.1 and 0 < eps_prime < 0.1):
        raise ValueError("eps and eps_prime must lie in (0, 0.1)")
    if Benchmark(sol.benchmark) is not Benchmark.ONLINE:
        raise ValueError("classification needs an ONLINE solution")
    P = proposals or proposal_probabilities(inst, sol)
    total = lp_gain(inst, sol)
    verdicts, thresholds, shares, reports = {}, {}, {}, {}
    flagged = set()
    for j, on in enumerate(inst.online):
        g = on.gamma
        rows = [(i, r, x, P[(i, j)]) for i, r, x in _edges_of(inst, sol, j)]
        edges = [(r, x) for _, r, x, _ in rows]
        gain = sum(r * x for r, x in edges)
        sat = sum(x for r, x in edges) / g
        case1 = sat <= 1 - eps
        case2 = gain > 0 and all(windowed_gain(edges, w, eps) < (1 - eps) * gain
                                 for w in {r for r, _ in edges} | {r / (1 + eps) for r, _ in edges})
        S = [x for _, _, x, p in rows if p <= 1 - eps]
        case3 = bool(S) and sum(S) >= eps * g
        rj, best = _best_window(edges, eps) if edges else (None, 0.0)
        hard_i = rj is not None and best >= (1 - eps) * gain
        hard_ii = False
        if hard_i:
            mass = sum(x for _, r, x, p in rows if rj <= r <= rj * (1 + eps) and p >= 1 - eps_prime)
            hard_ii = mass / g >= 1 - 2 * eps_prime
        if hard_i and hard_ii:
            v = Verdict.HARD
        elif case1:
            v = Verdict.EASY_CASE1
        elif case2:
            v = Verdict.EASY_CASE2
        elif case3:
            v = Verdict.EASY_CASE3
        else:
            v = Verdict.HARD
            flagged.add(j)
        verdicts[j] = v
        thresholds[j] = rj if hard_i else None
        shares[j] = gain / total if total > 0 else 0.0
        reports[j] = TypeReport(case1, case2, case3, hard_i, hard_ii, rj, gain, sat)
    return Classification(verdicts, thresholds, (eps, eps_prime), shares, frozenset(flagged), reports)


def is_vwhc(inst: ProblemInstance, classification: Classification, sol: LpSolution, eps: float) -> bool:
    """True when the non-hard types carry less than an ``eps`` share of the LP gain."""
    if not math.isclose(classification.params[0], eps):
        raise ValueError("classification was computed with a different eps")
    easy = [j for j, v in classification.verdicts.items() if v is not Verdict.HARD]
    return lp_gain(inst, sol, easy) < eps * lp_gain(inst, sol)


# offline benchmark

def is_abundant(inst: ProblemInstance, i: int) -> bool:
    t = inst.offline[i]
    return t.lam / t.mu >= 1


def scarce_saturation_bound(inst: ProblemInstance, S: Iterable[int], eps: float) -> tuple[float, float]:
    """``(sum_{i in S} lam/mu, 2/(1-eps))``; the first never exceeds the second
    when ``S`` are scarce neighbours proposing with probability ``>= 1-eps``."""
    return sum(inst.offline[i].lam / inst.offline[i].mu for i in S), 2 / (1 - eps)


def classify_competitive(inst: ProblemInstance, sol: LpSolution, eps: float = 0.05,
                         proposals: ProposalMatrix | None = None) -> dict[int, Verdict]:
    """Easy-case labels against the offline benchmark.

    Case 1: proposals bounded away from one carry ``eps * gamma_j`` of mass.
    Case 2: abundant queues (``lam/mu >= 1``) carry an ``eps`` fraction.
    Case 3: all but ``eps`` of the mass sits on scarce queues proposing
    with probability at least ``1 - eps``.
    """
    if not 0 < eps < 0.1:
        raise ValueError("eps must lie in (0, 0.1)")
    if Benchmark(sol.benchmark) is not Benchmark.OFFLINE:
        raise ValueError("competitive classification needs an OFFLINE solution")
    P = proposals or proposal_probabilities(inst, sol)
    out = {}
    for j, on in enumerate(inst.online):
        g = on.gamma
        rows = [(i, x, P[(i, j)]) for i, _, x in _edges_of(inst, sol, j)]
        low = [x for _, x, p in rows if x > 0 and p <= 1 - eps]
        abundant = sum(x for i, x, _ in rows if is_abundant(inst, i)) / g
        S = {i for i, x, p in rows if x > 0 and not is_abundant(inst, i) and p >= 1 - eps}
        rest = sum(x for i, x, _ in rows if i not in S) / g
        if low and sum(low) >= eps * g:
            out[j] = Verdict.EASY_CASE1
        elif abundant >= eps:
            out[j] = Verdict.EASY_CASE2
        elif rest <= eps:
            out[j] = Verdict.EASY_CASE3
        else:
            out[j] = Verdict.NONE
    return out


# --------------------------------------------------------------------------
# instance transformation

@dataclass(frozen=True)
class TransformedInstance:
    """Pruned, TOP/BOT-split instance together with its split LP solution.

    ``load[i]`` is the total arrival rate of the online types that offline
    type ``i`` served in the original LP solution (before pruning); it sets
    the depletion rate of TOP queues in the weakly correlated chains.
    ``online_map`` / ``offline_map`` send new ids to original ids.
    """

    instance: ProblemInstance
    sol: LpSolution
    dropped_gain: float
    original_gain: float
    load: tuple[float, ...]
    online_map: Mapping[int, int]
    offline_map: Mapping[int, int]
    classification: Classification = field(repr=False, default=None)
    params: tuple[float, float] = (0.05, 0.05)


def instance_transformation(inst: ProblemInstance, sol: LpSolution, eps: float = 0.05,
                            eps_prime: float = 0.05, classification: Classification | None = None,
                            ) -> TransformedInstance:
    """Drop easy online types and unimportant edges, then split offline types TOP/BOT.

    The LP solution is carried along without re-solving: surviving match
    rates and every abandonment rate are halved between the two copies.
    """
    P = proposal_probabilities(inst, sol)
    cls = classification or classify(inst, sol, eps, eps_prime, proposals=P)
    hard = cls.hard
    if not hard:
        raise TransformError("no hard online types: transformation would be empty")
    keep_edges = {}
    for j in hard:
        rj = cls.r_threshold[j]
        if rj is None:
            continue  # flagged hard type without a reward window
        for i in inst.offline_neighbors(j):
            r = inst.rewards[(i, j)]
            if rj <= r <= (1 + eps) * rj and P[(i, j)] >= 1 - eps_prime:
                keep_edges[(i, j)] = r
    new_j = {j: k for k, j in enumerate(hard)}
    from .instance import OnlineType

    online = [OnlineType(new_j[j], inst.online[j].gamma) for j in hard]
    names = {("online", new_j[j]): inst.name("online", j) for j in hard}
    names.update({k: v for k, v in inst.names.items() if k[0] == "offline"})
    pruned = ProblemInstance(inst.offline, online, {(i, new_j[j]): r for (i, j), r in keep_edges.items()}, names)
    split = top_bot_split(pruned)
    n = inst.n_offline

    xm, xa = {}, {}
    for (i, j) in keep_edges:
        v = sol.x(i, j) / 2
        xm[(i, new_j[j])] = v
        xm[(n + i, new_j[j])] = v
    for i in range(n):
        xa[i] = xa[n + i] = sol.x_abandon[i] / 2
    kept_gain = sum(r * sol.x(i, j) for (i, j), r in keep_edges.items())
    new_sol = LpSolution(Benchmark.ONLINE, xm, xa, kept_gain)

    load = []
    for i in range(n):
        load.append(sum(inst.online[j].gamma for j in inst.online_neighbors(i) if sol.x(i, j) > 0))
    total = lp_gain(inst, sol)
    return TransformedInstance(
        instance=split, sol=new_sol, dropped_gain=total - kept_gain, original_gain=total,
        load=tuple(load + load), online_map={k: j for j, k in new_j.items()},
        offline_map={**{i: i for i in range(n)}, **{n + i: i for i in range(n)}},
        classification=cls, params=(eps, eps_prime))


def transformed_feasibility(tr: TransformedInstance, tol: float = 1e-6, n_random: int = 10_000) -> list[str]:
    """Constraint check of the split solution on the transformed instance.

    Flow balance is checked as ``<=``: pruned edges leave part of each
    arrival rate unassigned, and raising ``x_a`` to restore equality only
    loosens the other constraint families.
    """
    return check_feasibility(tr.instance, tr.sol, tol=tol, n_random=n_random, flow_equality=False)


def transformed_properties(tr: TransformedInstance) -> dict[str, list[str]]:
    """Check the structural inequalities of a transformed instance.

    Returns a mapping from property name to the list of failures (empty
    lists mean the property holds everywhere).
    """
    eps, eps_p = tr.params
    inst, sol = tr.instance, tr.sol
    P = proposal_probabilities(inst, sol)
    out = {"proposals": [], "rewards": [], "abandon_sum": [], "balance": [],
           "match_bounds": [], "abandon_bounds": []}
    for j in range(inst.n_online):
        orig = tr.online_map[j]
        rj = tr.classification.r_threshold[orig]
        nb = [i for i in inst.offline_neighbors(j) if sol.x(i, j) > 0]
        for i in inst.offline_neighbors(j):
            if P[(i, j)] < 1 - eps_p - 1e-12:
                out["proposals"].append(f"p({i},{j}) = {P[(i, j)]:.6g}")
            r = inst.rewards[(i, j)]
            if not rj <= r <= rj * (1 + eps):
                out["rewards"].append(f"r({i},{j}) = {r} outside window at {rj}")
        s = sum(sol.x_abandon[i] / inst.offline[i].mu for i in nb)
        if not (1 - eps_p <= s <= 1 / (1 - eps_p)):
            out["abandon_sum"].append(f"online {j}: sum x_a/mu = {s:.6g}")
        top = sum(inst.offline[i].lam / inst.offline[i].mu for i in nb if inst.offline[i].section == TOP)
        bot = sum(inst.offline[i].lam / inst.offline[i].mu for i in nb if inst.offline[i].section == BOT)
        if abs(top - bot) > 1e-12:
            out["balance"].append(f"online {j}: TOP {top!r} vs BOT {bot!r}")
        g = inst.online[j].gamma
        for i in nb:
            t = inst.offline[i]
            base = g * t.lam / (t.mu + tr.load[i])
            x = sol.x(i, j)
            if not ((1 - eps_p) * base <= x <= base / (1 - eps_p)):
                out["match_bounds"].append(f"x({i},{j}) = {x:.6g} vs base {base:.6g}")
    for i, t in enumerate(inst.offline):
        if not any(sol.x(i, j) > 0 for j in inst.online_neighbors(i)):
            continue
        base = t.mu * t.lam / (t.mu + tr.load[i])
        a = sol.x_abandon[i]
        if not (base <= a * (1 + 1e-12) and a <= base / (1 - eps_p)):
            out["abandon_bounds"].append(f"x_a({i}) = {a:.6g} vs base {base:.6g}")
    return out


def weak_chain_te_probability(tr: TransformedInstance, j: int) -> float:
    """Probability that every TOP neighbour of ``j`` is empty when TOP queues are
    independent with births ``lam`` and per-node deaths ``mu + load``."""
    inst = tr.instance
    if not 0 <= j < inst.n_online:
        raise KeyError(f"unknown online id {j}")
    s = 0.0
    for i in inst.offline_neighbors(j):
        t = inst.offline[i]
        if t.section == TOP:
            s += t.lam / (t.mu + tr.load[i])
    return math.exp(-s)


def te_probability(lams, mus, loads) -> float:
    """Same product for raw TOP parameters."""
    return math.exp(-sum(l / (m + g) for l, m, g in zip(lams, mus, loads)))
