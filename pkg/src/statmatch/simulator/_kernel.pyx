# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loops; see ``_pykernel`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log
from numpy.random cimport bitgen_t

cnp.import_array()

NAME = "cython"


cdef inline void _add_area(double[:, ::1] arr, Py_ssize_t col, double a, double b, double val,
                           double burn, double t_end, double width, Py_ssize_t nb) noexcept nogil:
    cdef Py_ssize_t k
    cdef double end, seg
    if a < burn:
        a = burn
    if b > t_end:
        b = t_end
    if b <= a or val == 0.0:
        return
    k = <Py_ssize_t>((a - burn) / width)
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


cdef inline void _hist_add(double[:, ::1] hist, Py_ssize_t i, long q, double a, double b,
                           double burn, double t_end, long hmax) noexcept nogil:
    if a < burn:
        a = burn
    if b > t_end:
        b = t_end
    if b > a:
        hist[i, q if q < hmax else hmax] += b - a


cdef bitgen_t* _bitgen(rng) except NULL:
    capsule = rng.bit_generator.capsule
    return <bitgen_t*>PyCapsule_GetPointer(capsule, "BitGenerator")


def market(lam_, mu_, gamma_, indptr_, nbr_, prob_, rew_, eid_, Py_ssize_t n_edges, int mode,
           double t_end, double burn, Py_ssize_t nb, long hmax, rng):
    cdef double[::1] lam = np.ascontiguousarray(lam_, dtype=np.float64)
    cdef double[::1] mu = np.ascontiguousarray(mu_, dtype=np.float64)
    cdef double[::1] gamma = np.ascontiguousarray(gamma_, dtype=np.float64)
    cdef long[::1] indptr = np.ascontiguousarray(indptr_, dtype=np.int_)
    cdef long[::1] nbr = np.ascontiguousarray(nbr_, dtype=np.int_)
    cdef double[::1] prob = np.ascontiguousarray(prob_, dtype=np.float64)
    cdef double[::1] rew = np.ascontiguousarray(rew_, dtype=np.float64)
    cdef long[::1] eid = np.ascontiguousarray(eid_, dtype=np.int_)
    cdef Py_ssize_t no = lam.shape[0], non = gamma.shape[0]
    cdef double width = (t_end - burn) / nb

    reward_a = np.zeros((nb, 1))
    match_a = np.zeros((nb, max(n_edges, 1)))
    abandon_a = np.zeros((nb, no))
    arrive_a = np.zeros((nb, non))
    matched_a = np.zeros((nb, non))
    qarea_a = np.zeros((nb, no))
    hist_a = np.zeros((no, hmax + 1))
    cdef double[:, ::1] reward = reward_a, match = match_a, abandon = abandon_a
    cdef double[:, ::1] arrive_on = arrive_a, matched_on = matched_a, qarea = qarea_a, hist = hist_a

    clam_a = np.zeros(no)
    cgam_a = np.zeros(non)
    Q_a = np.zeros(no, dtype=np.int_)
    last_a = np.zeros(no)
    cdef double[::1] clam = clam_a, cgam = cgam_a, last = last_a
    cdef long[::1] Q = Q_a

    cdef double s, big_lam, big_g, dep = 0.0, t = 0.0, R, v, w, c, uu
    cdef Py_ssize_t i, j, k, b, chosen
    cdef long qtot = 0, n_events = 0
    cdef bint rec
    cdef bitgen_t* bg = _bitgen(rng)

    s = 0.0
    for i in range(no):
        s += lam[i]
        clam[i] = s
    big_lam = s
    s = 0.0
    for j in range(non):
        s += gamma[j]
        cgam[j] = s
    big_g = s

    with rng.bit_generator.lock:
        with nogil:
            while True:
                R = big_lam + big_g + dep
                t += -log(1.0 - bg.next_double(bg.state)) / R
                if t >= t_end:
                    break
                n_events += 1
                rec = t >= burn
                b = 0
                if rec:
                    b = <Py_ssize_t>((t - burn) / width)
                    if b > nb - 1:
                        b = nb - 1
                v = bg.next_double(bg.state) * R
                if v < big_lam:
                    i = 0
                    while i < no - 1 and not v < clam[i]:
                        i += 1
                    _add_area(qarea, i, last[i], t, <double>Q[i], burn, t_end, width, nb)
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
                        uu = bg.next_double(bg.state)
                        c = 0.0
                        for k in range(indptr[j], indptr[j + 1]):
                            i = nbr[k]
                            if Q[i] > 0:
                                c += Q[i] * prob[k]
                                if c > uu:
                                    chosen = k
                                    break
                    elif mode == 2:
                        for k in range(indptr[j], indptr[j + 1]):
                            if Q[nbr[k]] > 0:
                                chosen = k
                                break
                    if chosen >= 0:
                        i = nbr[chosen]
                        _add_area(qarea, i, last[i], t, <double>Q[i], burn, t_end, width, nb)
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
                        _add_area(qarea, i, last[i], t, <double>Q[i], burn, t_end, width, nb)
                        _hist_add(hist, i, Q[i], last[i], t, burn, t_end, hmax)
                        last[i] = t
                        Q[i] -= 1
                        qtot -= 1
                        dep = dep - mu[i] if qtot > 0 else 0.0
                        if rec:
                            abandon[b, i] += 1.0

            for i in range(no):
                _add_area(qarea, i, last[i], t_end, <double>Q[i], burn, t_end, width, nb)
                _hist_add(hist, i, Q[i], last[i], t_end, burn, t_end, hmax)

    return {"reward": reward_a[:, 0], "match": match_a[:, :n_edges], "abandon": abandon_a,
            "arrive_on": arrive_a, "matched_on": matched_a, "qarea": qarea_a,
            "hist": hist_a, "n_events": n_events}


def weak(lam_, mu_, load_, top_, j_indptr_, j_nbr_, i_indptr_, i_nbr_, gamma_,
         double t_end, double burn, Py_ssize_t nb, rng):
    cdef double[::1] lam = np.ascontiguousarray(lam_, dtype=np.float64)
    cdef double[::1] mu = np.ascontiguousarray(mu_, dtype=np.float64)
    cdef double[::1] load = np.ascontiguousarray(load_, dtype=np.float64)
    cdef long[::1] top = np.ascontiguousarray(top_, dtype=np.int_)
    cdef long[::1] j_indptr = np.ascontiguousarray(j_indptr_, dtype=np.int_)
    cdef long[::1] j_nbr = np.ascontiguousarray(j_nbr_, dtype=np.int_)
    cdef long[::1] i_indptr = np.ascontiguousarray(i_indptr_, dtype=np.int_)
    cdef long[::1] i_nbr = np.ascontiguousarray(i_nbr_, dtype=np.int_)
    cdef double[::1] gamma = np.ascontiguousarray(gamma_, dtype=np.float64)
    cdef Py_ssize_t no = lam.shape[0], non = gamma.shape[0]
    cdef double width = (t_end - burn) / nb

    te_a = np.zeros((nb, non))
    empty_a = np.zeros((nb, non))
    qarea_a = np.zeros((nb, no))
    cdef double[:, ::1] te_area = te_a, empty_area = empty_a, qarea = qarea_a

    clam_a = np.zeros(no)
    Q_a = np.zeros(no, dtype=np.int_)
    last_a = np.zeros(no)
    ntop_a = np.zeros(non, dtype=np.int_)
    nall_a = np.zeros(non, dtype=np.int_)
    lastj_a = np.zeros(non)
    dep_a = np.zeros(no)
    rate_a = np.zeros(no)
    cdef double[::1] clam = clam_a, last = last_a, lastj = lastj_a, dep = dep_a, rate = rate_a
    cdef long[::1] Q = Q_a, ntop = ntop_a, nall = nall_a

    cdef double s, big_lam, S, R, r, t = 0.0, v, w, c, d, dd
    cdef Py_ssize_t i, j, k, m, q, jj, bb
    cdef long n_events = 0, step, sgn
    cdef bint was, te_before
    cdef bitgen_t* bg = _bitgen(rng)

    s = 0.0
    for i in range(no):
        s += lam[i]
        clam[i] = s
    big_lam = s
    for i in range(no):
        if not top[i]:
            d = 0.0
            for k in range(i_indptr[i], i_indptr[i + 1]):
                d += gamma[i_nbr[k]]
            dep[i] = d

    with rng.bit_generator.lock:
        with nogil:
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
                t += -log(1.0 - bg.next_double(bg.state)) / R
                if t >= t_end:
                    break
                n_events += 1
                v = bg.next_double(bg.state) * R
                if v < big_lam:
                    i = 0
                    while i < no - 1 and not v < clam[i]:
                        i += 1
                    sgn = 1
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
                    sgn = -1
                    if i < 0:
                        continue
                _add_area(qarea, i, last[i], t, <double>Q[i], burn, t_end, width, nb)
                last[i] = t
                was = Q[i] > 0
                Q[i] += sgn
                if was != (Q[i] > 0):
                    step = 1 if sgn > 0 else -1
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
                                    bb = j_nbr[m]
                                    if not top[bb]:
                                        dd = 0.0
                                        for q in range(i_indptr[bb], i_indptr[bb + 1]):
                                            jj = i_nbr[q]
                                            if ntop[jj] == 0:
                                                dd += gamma[jj]
                                        dep[bb] = dd

            for i in range(no):
                _add_area(qarea, i, last[i], t_end, <double>Q[i], burn, t_end, width, nb)
            for j in range(non):
                _add_area(te_area, j, lastj[j], t_end, 1.0 if ntop[j] == 0 else 0.0, burn, t_end, width, nb)
                _add_area(empty_area, j, lastj[j], t_end, 1.0 if nall[j] == 0 else 0.0, burn, t_end, width, nb)

    return {"te_area": te_a, "empty_area": empty_a, "qarea": qarea_a, "n_events": n_events}
