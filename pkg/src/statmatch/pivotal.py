"""Dependent rounding with the marginal and prefix properties.

Systematic sampling: draw one ``U ~ Uniform[0, 1)`` and select index ``k``
when ``[S_{k-1}, S_k)`` contains a point of ``U + Z``, where ``S_k`` are
the prefix sums of the marginals.  Each index is selected with probability
``m_k`` and some index among the first ``k`` is selected with probability
``min(1, S_k)``.  At most ``ceil(sum(m))`` indices are ever selected.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

INPUT_TOL = 1e-12


def check_marginals(m: Sequence[float]) -> list[float]:
    """Validate and return the marginals as floats clipped to [0, 1]."""
    out = []
    for k, v in enumerate(m):
        v = float(v)
        if not (-INPUT_TOL <= v <= 1 + INPUT_TOL):
            raise ValueError(f"marginal {k} = {v} outside [0, 1]")
        out.append(min(max(v, 0.0), 1.0))
    return out


def prefix_sums(m: Sequence[float]) -> list[float]:
    """Compensated (Neumaier) running sums ``S_1, ..., S_n``."""
    s = c = 0.0
    out = []
    for v in m:
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out.append(s + c)
    return out


def _hits(a: float, b: float, u: float) -> int:
    # number of points u + z (z integer) in [a, b)
    return math.ceil(b - u) - math.ceil(a - u)


def sample_with(m: Sequence[float], u: float) -> list[int]:
    """Selected indices for a given uniform draw ``u`` in [0, 1)."""
    m = check_marginals(m)
    out = []
    prev = 0.0
    for k, s in enumerate(prefix_sums(m)):
        if m[k] > 0 and _hits(prev, s, u) > 0:
            out.append(k)
        prev = s
    return out


def first_selected_with(m: Sequence[float], u: float):
    """Smallest selected index for the draw ``u`` (``None`` if nothing is selected)."""
    m = check_marginals(m)
    for k, s in enumerate(prefix_sums(m)):
        if m[k] > 0 and s > u:
            return k
    return None


def sample(m: Sequence[float], rng: np.random.Generator) -> set[int]:
    """Random subset of indices with ``Pr[k selected] = m[k]``."""
    return set(sample_with(m, rng.random()))


def first_selected(m: Sequence[float], rng: np.random.Generator):
    """``min(sample(m, rng))`` under the same draw, without building the set."""
    return first_selected_with(m, rng.random())


def prefix_hit_probability(m: Sequence[float], k: int) -> float:
    """``Pr[some index < k is selected] = min(1, m[0] + ... + m[k-1])``."""
    m = check_marginals(m)
    if not 1 <= k <= len(m):
        raise IndexError(f"k={k} outside [1, {len(m)}]")
    return min(1.0, prefix_sums(m)[k - 1])


def sample_matrix(m: Sequence[float], u) -> np.ndarray:
    """Selection indicators for many draws at once: row ``r`` is the draw ``u[r]``."""
    m = check_marginals(m)
    S = np.array([0.0] + prefix_sums(m))
    u = np.asarray(u, dtype=float)[:, None]
    hits = np.ceil(S[1:] - u) - np.ceil(S[:-1] - u)
    return (hits > 0) & (np.array(m) > 0)
