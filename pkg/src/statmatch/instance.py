"""Problem instances for stationary bipartite matching.

An instance has offline types (arrive at rate ``lam``, stay for an
``Exp(mu)`` lifetime), online types (arrive at rate ``gamma`` and must be
matched on arrival) and a sparse reward map over ``(i, j)`` pairs.  A key
that is present is an edge even if its reward is zero; a missing key is a
non-edge.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

TOP = "TOP"
BOT = "BOT"
NONE = "NONE"
SECTIONS = (TOP, BOT, NONE)


class InstanceError(ValueError):
    """Raised for malformed instances or invalid transform arguments."""


@dataclass(frozen=True)
class OfflineType:
    id: int
    lam: float
    mu: float
    section: str = NONE


@dataclass(frozen=True)
class OnlineType:
    id: int
    gamma: float


@dataclass(frozen=True)
class ProblemInstance:
    """Immutable instance.  ids are the dense positions in ``offline`` / ``online``.

    ``names`` optionally maps ``("offline", id)`` / ``("online", id)`` to an
    external label; transforms keep it up to date.
    """

    offline: tuple[OfflineType, ...]
    online: tuple[OnlineType, ...]
    rewards: Mapping[tuple[int, int], float]
    names: Mapping[tuple[str, int], str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "offline", tuple(self.offline))
        object.__setattr__(self, "online", tuple(self.online))
        object.__setattr__(self, "rewards", dict(self.rewards))
        object.__setattr__(self, "names", dict(self.names))

    @property
    def n_offline(self) -> int:
        return len(self.offline)

    @property
    def n_online(self) -> int:
        return len(self.online)

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Edges sorted by (i, j)."""
        return sorted(self.rewards)

    @property
    def lam(self) -> np.ndarray:
        return np.array([t.lam for t in self.offline], dtype=float)

    @property
    def mu(self) -> np.ndarray:
        return np.array([t.mu for t in self.offline], dtype=float)

    @property
    def gamma(self) -> np.ndarray:
        return np.array([t.gamma for t in self.online], dtype=float)

    def reward(self, i: int, j: int) -> float:
        return self.rewards[(i, j)]

    def offline_neighbors(self, j: int) -> list[int]:
        return sorted(i for (i, jj) in self.rewards if jj == j)

    def online_neighbors(self, i: int) -> list[int]:
        return sorted(j for (ii, j) in self.rewards if ii == i)

    def gamma_sum(self, i: int) -> float:
        """Total arrival rate of the online neighbours of ``i``."""
        return sum(self.online[j].gamma for j in self.online_neighbors(i))

    def section_ids(self, section: str) -> list[int]:
        return [t.id for t in self.offline if t.section == section]

    def name(self, side: str, idx: int) -> str:
        return self.names.get((side, idx), str(idx))


def validate(inst: ProblemInstance) -> list[str]:
    """Return every invariant violation as a readable message (empty if valid)."""
    out = []
    if not inst.offline:
        out.append("instance: at least one offline type required")
    if not inst.online:
        out.append("instance: at least one online type required")
    for pos, t in enumerate(inst.offline):
        if t.id != pos:
            out.append(f"offline {t.id}: id must equal its position {pos}")
        if not t.lam > 0:
            out.append(f"offline {t.id}: lambda must be > 0")
        if not t.mu > 0:
            out.append(f"offline {t.id}: mu must be > 0")
        if t.section not in SECTIONS:
            out.append(f"offline {t.id}: unknown section {t.section!r}")
    for pos, t in enumerate(inst.online):
        if t.id != pos:
            out.append(f"online {t.id}: id must equal its position {pos}")
        if not t.gamma > 0:
            out.append(f"online {t.id}: gamma must be > 0")
    for (i, j), r in sorted(inst.rewards.items()):
        if not 0 <= i < inst.n_offline:
            out.append(f"edge ({i},{j}): dangling offline id {i}")
        if not 0 <= j < inst.n_online:
            out.append(f"edge ({i},{j}): dangling online id {j}")
        if not r >= 0:
            out.append(f"edge ({i},{j}): reward must be >= 0")
    return out


def make_instance(lam, mu, gamma, rewards, sections=None) -> ProblemInstance:
    """Build an instance from plain sequences; ``rewards`` maps (i, j) -> r."""
    sections = sections or [NONE] * len(lam)
    offline = [OfflineType(i, float(l), float(m), s)
               for i, (l, m, s) in enumerate(zip(lam, mu, sections))]
    online = [OnlineType(j, float(g)) for j, g in enumerate(gamma)]
    return ProblemInstance(offline, online, {(int(i), int(j)): float(r) for (i, j), r in rewards.items()})


# --------------------------------------------------------------------------
# JSON

def _num(v) -> float:
    if isinstance(v, str):
        return float(Decimal(v))
    return float(v)


def from_dict(data: dict) -> ProblemInstance:
    """Load the JSON schema; ids may be arbitrary and are densified in order."""
    off_ids = [o["id"] for o in data["offline"]]
    on_ids = [o["id"] for o in data["online"]]
    if len(set(off_ids)) != len(off_ids):
        raise InstanceError("duplicate offline id")
    if len(set(on_ids)) != len(on_ids):
        raise InstanceError("duplicate online id")
    off_pos = {v: k for k, v in enumerate(off_ids)}
    on_pos = {v: k for k, v in enumerate(on_ids)}
    names = {}
    offline = []
    for k, o in enumerate(data["offline"]):
        offline.append(OfflineType(k, _num(o["lambda"]), _num(o["mu"]), o.get("section", NONE)))
        if o["id"] != k:
            names[("offline", k)] = str(o["id"])
    online = []
    for k, o in enumerate(data["online"]):
        online.append(OnlineType(k, _num(o["gamma"])))
        if o["id"] != k:
            names[("online", k)] = str(o["id"])
    rewards = {}
    for e in data.get("rewards", []):
        if e["i"] not in off_pos or e["j"] not in on_pos:
            raise InstanceError(f"reward references unknown id: ({e['i']},{e['j']})")
        key = (off_pos[e["i"]], on_pos[e["j"]])
        if key in rewards:
            raise InstanceError(f"duplicate reward key ({e['i']},{e['j']})")
        rewards[key] = _num(e["r"])
    inst = ProblemInstance(offline, online, rewards, names)
    problems = validate(inst)
    if problems:
        raise InstanceError("; ".join(problems))
    return inst


def to_dict(inst: ProblemInstance) -> dict:
    return {
        "offline": [{"id": t.id, "lambda": t.lam, "mu": t.mu, "section": t.section} for t in inst.offline],
        "online": [{"id": t.id, "gamma": t.gamma} for t in inst.online],
        "rewards": [{"i": i, "j": j, "r": inst.rewards[(i, j)]} for (i, j) in inst.edges],
    }


def load_instance(path) -> ProblemInstance:
    with open(path) as fh:
        return from_dict(json.load(fh))


def save_instance(inst: ProblemInstance, path) -> None:
    Path(path).write_text(json.dumps(to_dict(inst), indent=2))


# --------------------------------------------------------------------------
# transforms

def split_offline_type(inst: ProblemInstance, i: int, K: int) -> ProblemInstance:
    """Replace offline type ``i`` by ``K`` copies of rate ``lam/K`` (Poisson thinning).

    The copies take ids ``i, i+1, ..., i+K-1``; later types shift up by ``K-1``.
    """
    if not 0 <= i < inst.n_offline:
        raise InstanceError(f"unknown offline id {i}")
    if int(K) != K or K < 1:
        raise InstanceError("K must be a positive integer")
    K = int(K)
    old = inst.offline[i]

    def new_ids(k):
        if k < i:
            return [k]
        if k == i:
            return list(range(i, i + K))
        return [k + K - 1]

    offline = []
    names = {}
    for k, t in enumerate(inst.offline):
        for c, nid in enumerate(new_ids(k)):
            lam = old.lam / K if k == i else t.lam
            offline.append(OfflineType(nid, lam, t.mu, t.section))
            base = inst.name("offline", k)
            if k == i and K > 1:
                names[("offline", nid)] = f"{base}.{c}"
            elif ("offline", k) in inst.names:
                names[("offline", nid)] = base
    rewards = {}
    for (a, j), r in inst.rewards.items():
        for nid in new_ids(a):
            rewards[(nid, j)] = r
    names.update({k: v for k, v in inst.names.items() if k[0] == "online"})
    return ProblemInstance(offline, inst.online, rewards, names)


def binary_queue_split(inst: ProblemInstance, eps: float) -> tuple[ProblemInstance, int]:
    """Split every offline type ``K`` ways so that each copy has ``lam/mu <= eps**2``.

    Returns the split instance and ``K``.  Copies of type ``i`` occupy ids
    ``i*K .. i*K+K-1`` and keep the TOP/BOT section of their parent.
    """
    u = max(t.lam / t.mu for t in inst.offline)
    K = max(1, math.ceil(u / eps ** 2))
    out = inst
    for i in reversed(range(inst.n_offline)):
        out = split_offline_type(out, i, K)
    return out, K


def top_bot_split(inst: ProblemInstance) -> ProblemInstance:
    """Split each offline type into a TOP and a BOT copy of half the arrival rate.

    Offline type ``i`` becomes TOP id ``i`` and BOT id ``n + i``, so every TOP
    id is smaller than every BOT id.
    """
    if any(t.section != NONE for t in inst.offline):
        raise InstanceError("instance already carries TOP/BOT labels")
    n = inst.n_offline
    offline = [OfflineType(t.id, t.lam / 2, t.mu, TOP) for t in inst.offline]
    offline += [OfflineType(n + t.id, t.lam / 2, t.mu, BOT) for t in inst.offline]
    rewards = {}
    for (i, j), r in inst.rewards.items():
        rewards[(i, j)] = r
        rewards[(n + i, j)] = r
    names = {k: v for k, v in inst.names.items() if k[0] == "online"}
    for t in inst.offline:
        base = inst.name("offline", t.id)
        names[("offline", t.id)] = f"{base}/TOP"
        names[("offline", n + t.id)] = f"{base}/BOT"
    return ProblemInstance(offline, inst.online, rewards, names)


def balance_gap(inst: ProblemInstance, j: int) -> float:
    """``sum_{TOP in N_j} lam/mu - sum_{BOT in N_j} lam/mu``; zero after top_bot_split."""
    top = bot = 0.0
    for i in inst.offline_neighbors(j):
        t = inst.offline[i]
        if t.section == TOP:
            top += t.lam / t.mu
        elif t.section == BOT:
            bot += t.lam / t.mu
    return top - bot


def bipartite_reduction(lam, mu, rewards) -> ProblemInstance:
    """Reduce a general (non-bipartite) instance to a bipartite one.

    Each node type ``v`` is split by a fair coin into an offline copy
    (rate ``lam_v/2``, departure ``mu_v``) and an impatient online copy
    (rate ``lam_v/2``).  Positive entries of the symmetric reward matrix
    become edges between opposite copies.  A policy for the bipartite
    instance loses at most a factor 4 against the general optimum
    (a factor 2 from the coin flips, a factor 2 from the active/passive
    reduction).
    """
    R = np.asarray(rewards, dtype=float)
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    V = len(lam)
    if R.shape != (V, V) or len(mu) != V:
        raise InstanceError("reward matrix must be square and match the rate vectors")
    if not np.array_equal(R, R.T):
        raise InstanceError("reward matrix must be symmetric")
    if (R < 0).any():
        raise InstanceError("rewards must be nonnegative")
    edges = {(u, v): R[u, v] for u in range(V) for v in range(V) if R[u, v] > 0}
    inst = make_instance(lam / 2, mu, lam / 2, edges)
    problems = validate(inst)
    if problems:
        raise InstanceError("; ".join(problems))
    return inst


# --------------------------------------------------------------------------
# built-in examples

def example_instance(name: str, n: int, with_solution: bool = False):
    """Adversarial examples B1, B2, B3.

    B1: ``n`` offline types (lam=1/n, mu=1), one online type (gamma=1/n^2),
    unit rewards.  B2: ``n`` offline types (lam=1/sqrt(n), mu=1), one online
    type (gamma=sqrt(n)-1), unit rewards.  B3: ``n`` offline types
    (lam=mu=1); online types ``0..n-1`` with gamma=n and a zero-reward edge
    to offline type of the same index; online type ``n`` with gamma=1 and
    unit-reward edges to every offline type.

    With ``with_solution=True`` also returns the known LP solution for B2
    and B3 (``None`` for B1).
    """
    if n < 2:
        raise InstanceError("n must be >= 2")
    name = name.upper()
    if name == "B1":
        inst = make_instance([1 / n] * n, [1.0] * n, [1 / n ** 2], {(i, 0): 1.0 for i in range(n)})
    elif name == "B2":
        s = math.sqrt(n)
        inst = make_instance([1 / s] * n, [1.0] * n, [s - 1], {(i, 0): 1.0 for i in range(n)})
    elif name == "B3":
        rewards = {(i, i): 0.0 for i in range(n)}
        rewards.update({(i, n): 1.0 for i in range(n)})
        inst = make_instance([1.0] * n, [1.0] * n, [float(n)] * n + [1.0], rewards)
    else:
        raise InstanceError(f"unknown example {name!r}")
    if not with_solution:
        return inst
    from .lp import example_solution

    return inst, example_solution(name, n)


def with_sections(inst: ProblemInstance, sections: Iterable[str]) -> ProblemInstance:
    """Return a copy with the given TOP/BOT/NONE labels."""
    sections = list(sections)
    offline = [replace(t, section=s) for t, s in zip(inst.offline, sections)]
    return ProblemInstance(offline, inst.online, inst.rewards, inst.names)


def random_instance(rng, max_offline: int = 8, max_online: int = 8, rate=(0.2, 3.0),
                    reward=(0.0, 10.0), density: float = 0.5) -> ProblemInstance:
    """Random instance with uniform rates and rewards.

    Sizes are uniform on ``2..max``.  Each edge is present with probability
    ``density``; every online type keeps at least one edge.
    """
    n = int(rng.integers(2, max_offline + 1))
    m = int(rng.integers(2, max_online + 1))
    lam = rng.uniform(*rate, n)
    mu = rng.uniform(*rate, n)
    gamma = rng.uniform(*rate, m)
    rewards = {}
    for j in range(m):
        nb = [i for i in range(n) if rng.random() < density] or [int(rng.integers(n))]
        for i in nb:
            rewards[(i, j)] = float(rng.uniform(*reward))
    return make_instance(lam, mu, gamma, rewards)
