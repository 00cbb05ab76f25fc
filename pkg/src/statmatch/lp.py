"""Tightened LP relaxations solved by cutting planes.

Variables are the match rates ``x[i, j]`` on edges and the abandonment
rates ``x_a[i]``.  The exponential family of availability constraints

    sum_{i in H} x[i, j] <= gamma_j * (1 - exp(-sum_{i in H} lam_i / mu_i))

is separated exactly by checking the nested prefixes of the neighbours of
``j`` sorted by ``x[i, j] * mu_i / (gamma_j * lam_i)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np
import clarabel
from scipy import sparse

from .instance import ProblemInstance

log = logging.getLogger(__name__)

EXP_CAP = 700.0
PROB_TOL = 1e-9
ZERO_TOL = 1e-11


class Benchmark(str, Enum):
    ONLINE = "ONLINE"
    OFFLINE = "OFFLINE"


class LpError(RuntimeError):
    pass


class NonConvergenceError(LpError):
    pass


class FeasibilityError(LpError):
    pass


@dataclass(frozen=True)
class LpSolution:
    benchmark: Benchmark
    x_match: Mapping[tuple[int, int], float]
    x_abandon: Mapping[int, float]
    objective: float
    n_cuts: int = 0
    n_rounds: int = 0
    cuts: tuple = field(default=(), repr=False, compare=False)

    def x(self, i: int, j: int) -> float:
        return self.x_match.get((i, j), 0.0)


@dataclass(frozen=True)
class ProposalMatrix:
    p: Mapping[tuple[int, int], float]
    benchmark: Benchmark

    def __getitem__(self, key):
        return self.p.get(key, 0.0)


def availability(s: float) -> float:
    """``1 - exp(-s)`` with ``s`` capped so the value never underflows oddly."""
    if s >= EXP_CAP:
        return 1.0
    return -math.expm1(-s)


# --------------------------------------------------------------------------
# separation

def subset_violation(inst: ProblemInstance, x_match, j: int, H: Iterable[int]) -> float:
    H = list(H)
    lhs = sum(x_match.get((i, j), 0.0) for i in H)
    load = sum(inst.offline[i].lam / inst.offline[i].mu for i in H)
    return lhs - inst.online[j].gamma * availability(load)


def separation_oracle(inst: ProblemInstance, x_match, j: int, tolerance: float = 1e-7):
    """Most violated availability constraint for online type ``j``.

    Returns ``(H, violation)`` with ``H`` a tuple of offline ids, or ``None``
    when no prefix is violated by more than ``tolerance``.
    """
    H, value = max_prefix_violation(inst, x_match, j)
    if H and value > tolerance:
        return H, value
    return None


def max_prefix_violation(inst: ProblemInstance, x_match, j: int):
    """Best prefix and its violation (may be negative); empty prefix scores 0."""
    gamma = inst.online[j].gamma
    nbrs = inst.offline_neighbors(j)
    key = {}
    for i in nbrs:
        t = inst.offline[i]
        key[i] = x_match.get((i, j), 0.0) * t.mu / (gamma * t.lam)
    # stable sort keeps ascending ids among ties
    order = sorted(nbrs, key=lambda i: -key[i])
    best_H, best = (), 0.0
    lhs = load = 0.0
    for k, i in enumerate(order):
        t = inst.offline[i]
        lhs += x_match.get((i, j), 0.0)
        load += t.lam / t.mu
        v = lhs - gamma * availability(load)
        if v > best:
            best, best_H = v, tuple(order[:k + 1])
    return best_H, best


def brute_force_violation(inst: ProblemInstance, x_match, j: int) -> float:
    """Exhaustive maximum of the violation over all subsets of offline types."""
    n = inst.n_offline
    if n > 20:
        raise ValueError("brute force limited to 20 offline types")
    x = np.array([x_match.get((i, j), 0.0) for i in range(n)])
    load = inst.lam / inst.mu
    masks = ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1).astype(float)
    s = masks @ load
    avail = np.where(s >= EXP_CAP, 1.0, -np.expm1(-np.minimum(s, EXP_CAP)))
    v = masks @ x - inst.online[j].gamma * avail
    return float(max(0.0, v.max()))


# --------------------------------------------------------------------------
# solving

class _Model:
    """Column layout: one variable per edge, then one abandonment variable per offline type."""

    def __init__(self, inst: ProblemInstance, benchmark: Benchmark, ablated: bool):
        self.inst = inst
        self.benchmark = Benchmark(benchmark)
        self.edges = inst.edges
        self.col = {e: k for k, e in enumerate(self.edges)}
        self.E = len(self.edges)
        self.n = inst.n_offline
        self.nvar = self.E + self.n
        c = np.zeros(self.nvar)
        for k, e in enumerate(self.edges):
            c[k] = -inst.rewards[e]
        self.c = c

        # flow balance
        rows, cols, vals = [], [], []
        for k, (i, j) in enumerate(self.edges):
            rows.append(i), cols.append(k), vals.append(1.0)
        for i in range(self.n):
            rows.append(i), cols.append(self.E + i), vals.append(1.0)
        self.A_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n, self.nvar))
        self.b_eq = inst.lam

        self.ub_rows: list[dict[int, float]] = []
        self.b_ub: list[float] = []
        if self.benchmark is Benchmark.ONLINE:
            for k, (i, j) in enumerate(self.edges):
                t = inst.offline[i]
                self._add_row({k: 1.0 / inst.online[j].gamma, self.E + i: -1.0 / t.mu}, 0.0)
        self.cuts: list[tuple[int, tuple[int, ...]]] = []
        self._cut_keys = set()
        for (i, j) in self.edges:
            self.add_cut(j, (i,))
        if ablated:
            for j in range(inst.n_online):
                nb = inst.offline_neighbors(j)
                if nb:
                    self._add_row({self.col[(i, j)]: 1.0 for i in nb}, inst.online[j].gamma)

    def _add_row(self, coeffs, rhs):
        self.ub_rows.append(coeffs)
        self.b_ub.append(rhs)

    def add_cut(self, j: int, H: tuple[int, ...]) -> bool:
        key = (j, tuple(sorted(H)))
        if key in self._cut_keys:
            return False
        self._cut_keys.add(key)
        load = sum(self.inst.offline[i].lam / self.inst.offline[i].mu for i in H)
        self._add_row({self.col[(i, j)]: 1.0 for i in H}, self.inst.online[j].gamma * availability(load))
        self.cuts.append(key)
        return True

    def solve(self) -> np.ndarray:
        # Interior point on purpose: a simplex vertex on symmetric instances
        # jumps between equivalent optimal vertices and the cut loop cycles.
        rows, cols, vals = [], [], []
        for r, coeffs in enumerate(self.ub_rows):
            for k, v in coeffs.items():
                rows.append(r), cols.append(k), vals.append(v)
        m = len(self.ub_rows)
        A_ub = sparse.csc_matrix((vals, (rows, cols)), shape=(m, self.nvar))
        A = sparse.vstack([self.A_eq, A_ub, -sparse.identity(self.nvar)]).tocsc()
        b = np.concatenate([self.b_eq, self.b_ub, np.zeros(self.nvar)])
        cones = [clarabel.ZeroConeT(self.n), clarabel.NonnegativeConeT(m + self.nvar)]
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_gap_abs = settings.tol_gap_rel = settings.tol_feas = 1e-12
        P = sparse.csc_matrix((self.nvar, self.nvar))
        res = clarabel.DefaultSolver(P, self.c, A, b, cones, settings).solve()
        if str(res.status) not in ("Solved", "AlmostSolved"):
            raise LpError(f"inner LP failed: {res.status}")
        return np.asarray(res.x)

    def split(self, z):
        xm = {e: float(z[k]) for k, e in enumerate(self.edges)}
        xa = {i: float(z[self.E + i]) for i in range(self.n)}
        return xm, xa


def _polish(inst: ProblemInstance, benchmark: Benchmark, xm: dict, xa: dict):
    """Snap solver noise so the per-edge constraint and flow balance hold exactly.

    Reducing an ``x[i, j]`` and moving the mass into ``x_a[i]`` can only
    loosen every constraint family.
    """
    # interior-point noise on edges the optimum leaves empty
    xm = {e: (v if v > ZERO_TOL * inst.online[e[1]].gamma else 0.0) for e, v in xm.items()}
    for i, t in enumerate(inst.offline):
        a = max(xa[i], 0.0)
        for j in inst.online_neighbors(i):
            g = inst.online[j].gamma
            cap = g * a / t.mu if benchmark is Benchmark.ONLINE else g * availability(t.lam / t.mu)
            if xm[(i, j)] > cap:
                xm[(i, j)] = cap
        total = sum(xm[(i, j)] for j in inst.online_neighbors(i))
        if total > t.lam:
            scale = t.lam / total
            for j in inst.online_neighbors(i):
                xm[(i, j)] *= scale
            total = t.lam
        xa[i] = t.lam - total
    return xm, xa


def _cutting_planes(inst: ProblemInstance, benchmark, ablated: bool, tol: float, max_rounds: int) -> LpSolution:
    model = _Model(inst, benchmark, ablated)
    rounds = 0
    while True:
        rounds += 1
        z = model.solve()
        xm, xa = model.split(z)
        if ablated:
            break
        added = 0
        for j in range(inst.n_online):
            hit = separation_oracle(inst, xm, j, tol)
            if hit is not None and model.add_cut(j, hit[0]):
                added += 1
        log.debug("round %d: %d cuts added (total %d)", rounds, added, len(model.cuts))
        if not added:
            break
        if rounds >= max_rounds:
            raise NonConvergenceError(f"cutting planes did not converge in {max_rounds} rounds")
    xm, xa = _polish(inst, model.benchmark, xm, xa)
    obj = sum(inst.rewards[e] * v for e, v in xm.items())
    return LpSolution(model.benchmark, xm, xa, obj, n_cuts=len(model.cuts), n_rounds=rounds,
                      cuts=tuple(model.cuts))


def solve_tlp(inst: ProblemInstance, benchmark=Benchmark.ONLINE, tol: float = 1e-7,
              max_rounds: int = 500) -> LpSolution:
    """Solve the tightened LP for the online or offline benchmark."""
    return _cutting_planes(inst, Benchmark(benchmark), False, tol, max_rounds)


def solve_tlp_ablated(inst: ProblemInstance) -> LpSolution:
    """Online LP with the subset family replaced by singletons plus ``sum_i x[i, j] <= gamma_j``."""
    return _cutting_planes(inst, Benchmark.ONLINE, True, 0.0, 1)


# --------------------------------------------------------------------------
# feasibility

def check_feasibility(inst: ProblemInstance, sol: LpSolution, tol: float = 1e-6,
                      n_random: int = 10_000, rng=None, flow_equality: bool = True) -> list[str]:
    """Post-hoc check of every constraint family; returns violation messages.

    Availability constraints are checked on all prefixes (exact) and on
    ``n_random`` random subsets per online type.  With ``flow_equality=False``
    flow balance is only required as ``<=`` (pruned solutions).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    out = []
    for (e, v) in sol.x_match.items():
        if v < -tol:
            out.append(f"x{e} negative")
    for i, t in enumerate(inst.offline):
        a = sol.x_abandon.get(i, 0.0)
        if a < -tol:
            out.append(f"x_a[{i}] negative")
        flow = a + sum(sol.x(i, j) for j in inst.online_neighbors(i))
        if flow > t.lam + tol or (flow_equality and flow < t.lam - tol):
            out.append(f"flow balance at offline {i}: {flow} vs {t.lam}")
        if Benchmark(sol.benchmark) is Benchmark.ONLINE:
            for j in inst.online_neighbors(i):
                if sol.x(i, j) / inst.online[j].gamma > a / t.mu + tol:
                    out.append(f"per-edge constraint at ({i},{j})")
    for j in range(inst.n_online):
        nb = inst.offline_neighbors(j)
        if not nb:
            continue
        _, v = max_prefix_violation(inst, sol.x_match, j)
        if v > tol:
            out.append(f"availability at online {j}: prefix violation {v:.3g}")
        if n_random:
            mask = rng.random((n_random, len(nb))) < 0.5
            nb_arr = np.array(nb)
            xs = np.array([sol.x(i, j) for i in nb])
            loads = np.array([inst.offline[i].lam / inst.offline[i].mu for i in nb])
            lhs = mask @ xs
            rhs = inst.online[j].gamma * -np.expm1(-np.minimum(mask @ loads, EXP_CAP))
            bad = np.nonzero(lhs - rhs > tol)[0]
            if len(bad):
                out.append(f"availability at online {j}: random subset {nb_arr[mask[bad[0]]].tolist()}")
    return out


# --------------------------------------------------------------------------
# derived quantities

def proposal_probabilities(inst: ProblemInstance, sol: LpSolution) -> ProposalMatrix:
    """Per-copy proposal probabilities from an LP solution.

    ONLINE: ``(x[i,j]/gamma_j) / (x_a[i]/mu_i)``.  OFFLINE:
    ``(x[i,j]/gamma_j) / (1 - exp(-lam_i/mu_i))``.
    """
    bench = Benchmark(sol.benchmark)
    p = {}
    for (i, j), x in sol.x_match.items():
        if x <= 0:
            continue
        t = inst.offline[i]
        g = inst.online[j].gamma
        if bench is Benchmark.ONLINE:
            a = sol.x_abandon.get(i, 0.0)
            if a <= 0:
                raise FeasibilityError(f"x_a[{i}] = 0 with positive x[{i},{j}]")
            v = (x / g) / (a / t.mu)
        else:
            v = (x / g) / availability(t.lam / t.mu)
        if v > 1 + PROB_TOL:
            raise FeasibilityError(f"proposal probability {v} > 1 at ({i},{j})")
        p[(i, j)] = min(v, 1.0)
    return ProposalMatrix(p, bench)


def lp_gain(inst: ProblemInstance, sol: LpSolution, S=None) -> float:
    """Reward rate the LP solution collects on online types in ``S`` (all if None)."""
    if S is None:
        S = range(inst.n_online)
    S = set(S)
    for j in S:
        if not 0 <= j < inst.n_online:
            raise KeyError(f"unknown online id {j}")
    return sum(inst.rewards[(i, j)] * x for (i, j), x in sol.x_match.items() if j in S)


def example_solution(name: str, n: int):
    """LP solutions quoted for the built-in examples (``None`` when there is none)."""
    name = name.upper()
    if name == "B2":
        s = math.sqrt(n)
        x = (s - 1) / n * (1 - math.exp(-s))
        xm = {(i, 0): x for i in range(n)}
        xa = {i: 1 / s - x for i in range(n)}
        return LpSolution(Benchmark.ONLINE, xm, xa, n * x)
    if name == "B3":
        xm = {(i, i): (n - 2) / n for i in range(n)}
        xm.update({(i, n): 1 / n for i in range(n)})
        xa = {i: 1 / n for i in range(n)}
        return LpSolution(Benchmark.ONLINE, xm, xa, 1.0)
    return None


# --------------------------------------------------------------------------
# JSON

def solution_to_dict(sol: LpSolution) -> dict:
    return {
        "benchmark": Benchmark(sol.benchmark).value,
        "x_match": [{"i": i, "j": j, "x": v} for (i, j), v in sorted(sol.x_match.items())],
        "x_abandon": [{"i": i, "x": v} for i, v in sorted(sol.x_abandon.items())],
        "objective": sol.objective,
    }


def solution_from_dict(d: dict) -> LpSolution:
    xm = {(e["i"], e["j"]): float(e["x"]) for e in d["x_match"]}
    xa = {e["i"]: float(e["x"]) for e in d["x_abandon"]}
    return LpSolution(Benchmark(d["benchmark"]), xm, xa, float(d["objective"]))


def save_solution(sol: LpSolution, path) -> None:
    with open(path, "w") as fh:
        json.dump(solution_to_dict(sol), fh, indent=2)


def load_solution(path) -> LpSolution:
    with open(path) as fh:
        return solution_from_dict(json.load(fh))
