# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled MCMC kernels.

Mirrors ``bayestage._pycore`` operation for operation (same uniform layout,
same floating-point evaluation order) so both backends give the same chain.
"""
import numpy as np
from libc.math cimport exp, lgamma, log
from libc.stdlib cimport free, malloc

ctypedef long long i64

cdef double LOG_HALF = log(0.5)


cdef struct Ctx:
    Py_ssize_t n
    Py_ssize_t K
    double a
    double alpha
    double lg_a
    double k_lg_alpha
    double log_kappa


cdef inline double logm(const i64* row, Ctx* c) nogil:
    cdef i64 tot = 0
    cdef double s = 0.0
    cdef Py_ssize_t k
    for k in range(c.K):
        tot += row[k]
        s += lgamma(c.alpha + <double>row[k])
    return c.lg_a - lgamma(c.a + <double>tot) + s - c.k_lg_alpha


cdef inline double logm_sum(const i64* r1, const i64* r2, i64* tmp, Ctx* c) nogil:
    cdef Py_ssize_t k
    for k in range(c.K):
        tmp[k] = r1[k] + r2[k]
    return logm(tmp, c)


cdef void canonicalize(i64* labels, i64* mapping, Py_ssize_t n) nogil:
    cdef Py_ssize_t k
    cdef i64 nxt = 0, g
    for k in range(n):
        mapping[k] = -1
    for k in range(n):
        g = labels[k]
        if mapping[g] < 0:
            mapping[g] = nxt
            nxt += 1
        labels[k] = mapping[g]


cdef struct Work:
    i64* sizes      # n
    i64* bcounts    # n * K
    double* blogm   # n
    double* pen     # n
    double* lw      # n + 1
    double* joined  # n
    i64* tmp        # K
    i64* tmp2       # K
    i64* tmp3       # K
    i64* mapping    # n
    i64* A          # n
    i64* B          # n


cdef int work_alloc(Work* w, Py_ssize_t n, Py_ssize_t K):
    w.sizes = <i64*> malloc(n * sizeof(i64))
    w.bcounts = <i64*> malloc(n * K * sizeof(i64))
    w.blogm = <double*> malloc(n * sizeof(double))
    w.pen = <double*> malloc(n * sizeof(double))
    w.lw = <double*> malloc((n + 1) * sizeof(double))
    w.joined = <double*> malloc(n * sizeof(double))
    w.tmp = <i64*> malloc(K * sizeof(i64))
    w.tmp2 = <i64*> malloc(K * sizeof(i64))
    w.tmp3 = <i64*> malloc(K * sizeof(i64))
    w.mapping = <i64*> malloc(n * sizeof(i64))
    w.A = <i64*> malloc(n * sizeof(i64))
    w.B = <i64*> malloc(n * sizeof(i64))
    if (w.sizes == NULL or w.bcounts == NULL or w.blogm == NULL or w.pen == NULL or w.lw == NULL
            or w.joined == NULL or w.tmp == NULL or w.tmp2 == NULL or w.tmp3 == NULL or w.mapping == NULL
            or w.A == NULL or w.B == NULL):
        return -1
    return 0


cdef void work_free(Work* w):
    free(w.sizes); free(w.bcounts); free(w.blogm); free(w.pen); free(w.lw)
    free(w.joined); free(w.tmp); free(w.tmp2); free(w.tmp3); free(w.mapping); free(w.A); free(w.B)


cdef Py_ssize_t build_state(i64* labels, const i64* counts, Work* w, Ctx* c) nogil:
    cdef Py_ssize_t m = 0, x, k, g
    for x in range(c.n):
        if labels[x] + 1 > m:
            m = labels[x] + 1
    for g in range(m):
        w.sizes[g] = 0
        for k in range(c.K):
            w.bcounts[g * c.K + k] = 0
    for x in range(c.n):
        g = labels[x]
        w.sizes[g] += 1
        for k in range(c.K):
            w.bcounts[g * c.K + k] += counts[x * c.K + k]
    for g in range(m):
        w.blogm[g] = logm(&w.bcounts[g * c.K], c)
    return m


cdef Py_ssize_t _gibbs(i64* labels, const i64* counts, const double* W, const double* u,
                      Work* w, Ctx* c) nogil:
    cdef Py_ssize_t n = c.n, K = c.K
    cdef Py_ssize_t m = build_state(labels, counts, w, c)
    cdef Py_ssize_t x, y, k, g, b, pick
    cdef double mx, total, target, acc, solo, jm
    for x in range(n):
        # remove x
        b = labels[x]
        w.sizes[b] -= 1
        if w.sizes[b] == 0:
            for g in range(b, m - 1):
                w.sizes[g] = w.sizes[g + 1]
                w.blogm[g] = w.blogm[g + 1]
                for k in range(K):
                    w.bcounts[g * K + k] = w.bcounts[(g + 1) * K + k]
            m -= 1
            for y in range(n):
                if labels[y] > b:
                    labels[y] -= 1
        else:
            for k in range(K):
                w.bcounts[b * K + k] -= counts[x * K + k]
            w.blogm[b] = logm(&w.bcounts[b * K], c)
        labels[x] = -1
        # weights
        for g in range(m):
            w.pen[g] = 0.0
        for y in range(n):
            g = labels[y]
            if g >= 0:
                w.pen[g] += W[x * n + y]
        for g in range(m):
            jm = logm_sum(&w.bcounts[g * K], &counts[x * K], w.tmp, c)
            w.joined[g] = jm
            w.lw[g] = log(<double>w.sizes[g]) - 2.0 * w.pen[g] + jm - w.blogm[g]
        solo = logm(&counts[x * K], c)
        w.lw[m] = c.log_kappa + solo
        # pick
        mx = w.lw[0]
        for g in range(1, m + 1):
            if w.lw[g] > mx:
                mx = w.lw[g]
        total = 0.0
        for g in range(m + 1):
            w.lw[g] = exp(w.lw[g] - mx)
            total += w.lw[g]
        target = u[x] * total
        acc = 0.0
        pick = m
        for g in range(m + 1):
            acc += w.lw[g]
            if acc > target:
                pick = g
                break
        # assign
        if pick == m:
            w.sizes[m] = 1
            for k in range(K):
                w.bcounts[m * K + k] = counts[x * K + k]
            w.blogm[m] = solo
            m += 1
        else:
            w.sizes[pick] += 1
            for k in range(K):
                w.bcounts[pick * K + k] += counts[x * K + k]
            w.blogm[pick] = w.joined[pick]
        labels[x] = pick
    canonicalize(labels, w.mapping, n)
    return m


cdef double merge_ratio(const i64* A, Py_ssize_t sa, const i64* B, Py_ssize_t sb,
                        const i64* counts, const double* W, Work* w, Ctx* c) nogil:
    cdef Py_ssize_t K = c.K, n = c.n, k, p, q
    cdef double lik, cross, prior, prop
    for k in range(K):
        w.tmp[k] = 0
        w.tmp2[k] = 0
    for p in range(sa):
        for k in range(K):
            w.tmp[k] += counts[A[p] * K + k]
    for p in range(sb):
        for k in range(K):
            w.tmp2[k] += counts[B[p] * K + k]
    lik = logm_sum(w.tmp, w.tmp2, w.tmp3, c) - logm(w.tmp, c) - logm(w.tmp2, c)
    cross = 0.0
    for p in range(sa):
        for q in range(sb):
            cross += W[A[p] * n + B[q]]
    prior = -c.log_kappa + lgamma(<double>(sa + sb)) - lgamma(<double>sa) - lgamma(<double>sb) - 2.0 * cross
    prop = (sa + sb - 2) * LOG_HALF
    return lik + prior + prop


cdef int _split_merge(i64* labels, const i64* counts, const double* W, const double* u,
                     Work* w, Ctx* c) nogil:
    cdef Py_ssize_t n = c.n, i, j, x, sa = 0, sb = 0
    cdef i64 ki, kj, new
    cdef double r
    if n < 2:
        return 0
    i = <Py_ssize_t>(u[0] * n)
    if i > n - 1:
        i = n - 1
    j = <Py_ssize_t>(u[1] * (n - 1))
    if j > n - 2:
        j = n - 2
    if j >= i:
        j += 1
    ki = labels[i]
    kj = labels[j]
    if ki != kj:
        for x in range(n):
            if labels[x] == ki:
                w.A[sa] = x
                sa += 1
        for x in range(n):
            if labels[x] == kj:
                w.B[sb] = x
                sb += 1
        r = merge_ratio(w.A, sa, w.B, sb, counts, W, w, c)
        if r >= 0.0 or u[n + 2] < exp(r):
            for x in range(sb):
                labels[w.B[x]] = ki
            canonicalize(labels, w.mapping, n)
            return 1
        return 0
    for x in range(n):
        if labels[x] != ki:
            continue
        if x == j:
            w.B[sb] = x
            sb += 1
        elif x == i:
            w.A[sa] = x
            sa += 1
        elif u[2 + x] < 0.5:
            w.B[sb] = x
            sb += 1
        else:
            w.A[sa] = x
            sa += 1
    r = -merge_ratio(w.A, sa, w.B, sb, counts, W, w, c)
    if r >= 0.0 or u[n + 2] < exp(r):
        new = 0
        for x in range(n):
            if labels[x] + 1 > new:
                new = labels[x] + 1
        for x in range(sb):
            labels[w.B[x]] = new
        canonicalize(labels, w.mapping, n)
        return 1
    return 0


cdef void init_ctx(Ctx* c, Py_ssize_t n, Py_ssize_t K, double a, double log_kappa):
    c.n = n
    c.K = K
    c.a = a
    c.alpha = a / K
    c.lg_a = lgamma(a)
    c.k_lg_alpha = K * lgamma(c.alpha)
    c.log_kappa = log_kappa


def uniforms_per_iteration(n):
    return 2 * n + 3


def run(i64[::1] labels, i64[:, ::1] counts, double[:, ::1] W, double log_kappa, double a,
        double[:, ::1] U, keep, i64[:, ::1] out, bint gibbs=True, bint split=True):
    """Run ``U.shape[0]`` iterations in place; see ``_pycore.run``."""
    cdef Py_ssize_t n = labels.shape[0], K = counts.shape[1], T = U.shape[0]
    cdef Py_ssize_t t, r = 0, x
    cdef long accepted = 0
    cdef Ctx c
    cdef Work w
    cdef const unsigned char[::1] kp = np.ascontiguousarray(keep, dtype=np.uint8)
    if U.shape[1] < 2 * n + 3:
        raise ValueError("uniform rows are too short")
    init_ctx(&c, n, K, a, log_kappa)
    if work_alloc(&w, n, K if K > 0 else 1) != 0:
        work_free(&w)
        raise MemoryError()
    try:
        with nogil:
            for t in range(T):
                if gibbs:
                    _gibbs(&labels[0], &counts[0, 0], &W[0, 0], &U[t, 0], &w, &c)
                if split:
                    accepted += _split_merge(&labels[0], &counts[0, 0], &W[0, 0], &U[t, n], &w, &c)
                if kp[t]:
                    for x in range(n):
                        out[r, x] = labels[x]
                    r += 1
    finally:
        work_free(&w)
    return accepted


def gibbs_sweep(labels, counts, W, double log_kappa, double a, u):
    """One sweep on array inputs (in place on ``labels``)."""
    cdef i64[::1] lab = labels
    cdef i64[:, ::1] cnt = np.ascontiguousarray(counts, dtype=np.int64)
    cdef double[:, ::1] Wm = np.ascontiguousarray(W, dtype=np.float64)
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Ctx c
    cdef Work w
    init_ctx(&c, lab.shape[0], cnt.shape[1], a, log_kappa)
    work_alloc(&w, c.n, c.K)
    _gibbs(&lab[0], &cnt[0, 0], &Wm[0, 0], &uu[0], &w, &c)
    work_free(&w)


def split_merge_step(labels, counts, W, double log_kappa, double a, u):
    cdef i64[::1] lab = labels
    cdef i64[:, ::1] cnt = np.ascontiguousarray(counts, dtype=np.int64)
    cdef double[:, ::1] Wm = np.ascontiguousarray(W, dtype=np.float64)
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Ctx c
    cdef Work w
    cdef int acc
    init_ctx(&c, lab.shape[0], cnt.shape[1], a, log_kappa)
    work_alloc(&w, c.n, c.K)
    acc = _split_merge(&lab[0], &cnt[0, 0], &Wm[0, 0], &uu[0], &w, &c)
    work_free(&w)
    return acc
