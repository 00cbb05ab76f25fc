"""Pure-Python event loops.

Line-for-line mirror of ``_kernel.pyx``: same floating-point operations in
the same order and the same uniform stream, so both produce identical
output for a given generator state.
"""

import math

import numpy as np

NAME = "python"
_CHUNK = 4096


class _Uniforms:
    """Buffered ``rng.random()``; consumes the bit generator exactly like ``next_double``."""

    __slots__ = ("rng", "buf", "pos")

    def __init__(self, rng):
        self.rng = rng
        self.buf = rng.random(_CHUNK).tolist()
        self.pos = 0

    def __call__(self):
        if self.pos == _CHUNK:
            self.buf = self.rng.random(_CHUNK).tolist()
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


def _add_area(arr, col, a, b, val, burn, t_end, width, nb):
    # spread val * |[a, b) & [burn, t_end)| over the batches it overlaps
    if a < burn:
        a = burn
    if b > t_end:
        b = t_end
    if b <= a or val == 0.0:
        return
    k = int((a - burn) / width)
    if k > nb - 1:
        k = nb - 1
    while a < b:
        end = t_end if k == nb - 1 else burn + (k + 1) * width
        seg = (b if b < end else end) - a
        if seg > 0.0:
            arr[k, col] += val * seg
        a = end
        k += 1
        if k >= nb:
            break


def _hist_add(hist, i, q, a, b, burn, t_end, hmax):
    if a < burn:
        a = burn
    if b > t_end:
        b = t_end
    if b > a:
        hist[i, q if q < hmax else hmax] += b - a


def correlated_choice(Q, nbr, prob, lo, hi, uu):
    """Position in ``lo..hi-1`` of the first proposal under draw ``uu`` (-1 if none).

    Equivalent to systematic sampling over the vector that repeats
    ``prob[k]`` once per queued copy of ``nbr[k]``: the first selected entry
    is the first whose running sum exceeds ``uu``.
    """
    c = 0.0
    for k in range(lo, hi):
        i = nbr[k]
        if Q[i] > 0:
            c += Q[i] * prob[k]
            if c > uu:
                return k
    return -1


def market(lam, mu, gamma, indptr, nbr, prob, rew, eid, n_edges, mode,
           t_end, burn, nb, hmax, rng):
    """Simulate the market CTMC from empty queues up to ``t_end``.

    ``mode`` is 0 (never match), 1 (correlated proposals over the CSR
    lists) or 2 (first available neighbour in CSR order).  Returns per-batch
    tallies for events in ``[burn, t_end)``.
    """
    no, non = len(lam), len(gamma)
    width = (t_end - burn) / nb
    reward = np.zeros((nb, 1))
    match = np.zeros((nb, max(n_edges, 1)))
    abandon = np.zeros((nb, no))
    arrive_on = np.zeros((nb, non))
    matched_on = np.zeros((nb, non))
    qarea = np.zeros((nb, no))
    hist = np.zeros((no, hmax + 1))

    lam = list(map(float, lam))
    mu = list(map(float, mu))
    gamma = list(map(float, gamma))
    indptr = list(map(int, indptr))
    nbr = list(map(int, nbr))
    prob = list(map(float, prob))
    rew = list(map(float, rew))
    eid = list(map(int, eid))

    clam = []
    s = 0.0
    for v in lam:
        s += v
        clam.append(s)
    big_lam = s
    cgam = []
    s = 0.0
    for v in gamma:
        s += v
        cgam.append(s)
    big_g = s

    Q = [0] * no
    last = [0.0] * no
    qtot = 0
    dep = 0.0
    t = 0.0
    n_events = 0
    u = _Uniforms(rng)

    while True:
        R = big_lam + big_g + dep
        t += -math.log(1.0 - u()) / R
        if t >= t_end:
            break
        n_events += 1
        rec = t >= burn
        b = 0
        if rec:
            b = int((t - burn) / width)
            if b > nb - 1:
                b = nb - 1
        v = u() * R
        if v < big_lam:
            i = 0
            while i < no - 1 and not v < clam[i]:
                i += 1
            _add_area(qarea, i, last[i], t, float(Q[i]), burn, t_end, width, nb)
            _hist_add(hist, i, Q[i], last[i], t, burn, t_end, hmax)
            last[i] = t
            Q[i] += 1
            qtot += 1
            dep += mu[i]
        elif v < big_lam + big_g:
            w = v - big_lam
            j = 0
            while j < non - 1 and not w < cgam[j]:
                j += 1
            if rec:
                arrive_on[b, j] += 1.0
            chosen = -1
            if mode == 1:
                chosen = correlated_choice(Q, nbr, prob, indptr[j], indptr[j + 1], u())
            elif mode == 2:
                for k in range(indptr[j], indptr[j + 1]):
                    if Q[nbr[k]] > 0:
                        chosen = k
                        break
            if chosen >= 0:
                i = nbr[chosen]
                _add_area(qarea, i, last[i], t, float(Q[i]), burn, t_end, width, nb)
                _hist_add(hist, i, Q[i], last[i], t, burn, t_end, hmax)
                last[i] = t
                Q[i] -= 1
                qtot -= 1
                dep = dep - mu[i] if qtot > 0 else 0.0
                if rec:
                    reward[b, 0] += rew[chosen]
                    match[b, eid[chosen]] += 1.0
                    matched_on[b, j] += 1.0
        else:
            w = v - big_lam - big_g
            c = 0.0
            i = -1
            for k in range(no):
                if Q[k] > 0:
                    c += Q[k] * mu[k]
                    i = k
                    if w < c:
                        break
            if i >= 0:
                _add_area(qarea, i, last[i], t, float(Q[i]), burn, t_end, width, nb)
                _hist_add(hist, i, Q[i], last[i], t, burn, t_end, hmax)
                last[i] = t
                Q[i] -= 1
                qtot -= 1
                dep = dep - mu[i] if qtot > 0 else 0.0
                if rec:
                    abandon[b, i] += 1.0

    for i in range(no):
        _add_area(qarea, i, last[i], t_end, float(Q[i]), burn, t_end, width, nb)
        _hist_add(hist, i, Q[i], last[i], t_end, burn, t_end, hmax)
    return {"reward": reward[:, 0], "match": match[:, :n_edges], "abandon": abandon,
            "arrive_on": arrive_on, "matched_on": matched_on, "qarea": qarea,
            "hist": hist, "n_events": n_events}


def weak(lam, mu, load, top, j_indptr, j_nbr, i_indptr, i_nbr, gamma,
         t_end, burn, nb, rng):
    """Weakly correlated reference chains.

    TOP queues: births ``lam``, deaths ``Q * (mu + load)``.  BOT queues:
    births ``lam``, abandonment ``Q * mu``, and while nonempty an extra
    depletion at rate ``sum_{j in N_i} TE_j * gamma_j``.  ``j_nbr`` lists
    the offline neighbours of each online type, ``i_nbr`` the online
    neighbours of each offline type.
    """
    no, non = len(lam), len(gamma)
    width = (t_end - burn) / nb
    te_area = np.zeros((nb, non))
    empty_area = np.zeros((nb, non))
    qarea = np.zeros((nb, no))

    lam = list(map(float, lam))
    mu = list(map(float, mu))
    load = list(map(float, load))
    top = list(map(int, top))
    gamma = list(map(float, gamma))
    j_indptr = list(map(int, j_indptr))
    j_nbr = list(map(int, j_nbr))
    i_indptr = list(map(int, i_indptr))
    i_nbr = list(map(int, i_nbr))

    clam = []
    s = 0.0
    for v in lam:
        s += v
        clam.append(s)
    big_lam = s

    Q = [0] * no
    last = [0.0] * no
    ntop = [0] * non
    nall = [0] * non
    lastj = [0.0] * non
    dep = [0.0] * no
    for i in range(no):
        if not top[i]:
            d = 0.0
            for k in range(i_indptr[i], i_indptr[i + 1]):
                d += gamma[i_nbr[k]]
            dep[i] = d
    rate = [0.0] * no
    t = 0.0
    n_events = 0
    u = _Uniforms(rng)

    while True:
        S = 0.0
        for i in range(no):
            if top[i]:
                r = Q[i] * (mu[i] + load[i])
            else:
                r = Q[i] * mu[i]
                if Q[i] > 0:
                    r += dep[i]
            rate[i] = r
            S += r
        R = big_lam + S
        t += -math.log(1.0 - u()) / R
        if t >= t_end:
            break
        n_events += 1
        v = u() * R
        if v < big_lam:
            i = 0
            while i < no - 1 and not v < clam[i]:
                i += 1
            d = 1
        else:
            w = v - big_lam
            c = 0.0
            i = -1
            for k in range(no):
                if rate[k] > 0.0:
                    c += rate[k]
                    i = k
                    if w < c:
                        break
            d = -1
            if i < 0:
                continue
        _add_area(qarea, i, last[i], t, float(Q[i]), burn, t_end, width, nb)
        last[i] = t
        was = Q[i] > 0
        Q[i] += d
        if was != (Q[i] > 0):
            step = 1 if d > 0 else -1
            for k in range(i_indptr[i], i_indptr[i + 1]):
                j = i_nbr[k]
                _add_area(te_area, j, lastj[j], t, 1.0 if ntop[j] == 0 else 0.0, burn, t_end, width, nb)
                _add_area(empty_area, j, lastj[j], t, 1.0 if nall[j] == 0 else 0.0, burn, t_end, width, nb)
                lastj[j] = t
                nall[j] += step
                if top[i]:
                    te_before = ntop[j] == 0
                    ntop[j] += step
                    if te_before != (ntop[j] == 0):
                        for m in range(j_indptr[j], j_indptr[j + 1]):
                            b = j_nbr[m]
                            if not top[b]:
                                dd = 0.0
                                for q in range(i_indptr[b], i_indptr[b + 1]):
                                    jj = i_nbr[q]
                                    if ntop[jj] == 0:
                                        dd += gamma[jj]
                                dep[b] = dd

    for i in range(no):
        _add_area(qarea, i, last[i], t_end, float(Q[i]), burn, t_end, width, nb)
    for j in range(non):
        _add_area(te_area, j, lastj[j], t_end, 1.0 if ntop[j] == 0 else 0.0, burn, t_end, width, nb)
        _add_area(empty_area, j, lastj[j], t_end, 1.0 if nall[j] == 0 else 0.0, burn, t_end, width, nb)
    return {"te_area": te_area, "empty_area": empty_area, "qarea": qarea, "n_events": n_events}
