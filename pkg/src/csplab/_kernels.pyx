# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_fallback`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, pow
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    OK = 0
    EXHAUSTED = 1
    NODE_CAP = 2
    INCONSISTENT = 3


def wht(double[::1] a, int k):
    cdef Py_ssize_t n = a.shape[0], h, i, j
    cdef double lo, hi
    h = 1
    for _ in range(k):
        i = 0
        while i < n:
            for j in range(i, i + h):
                lo = a[j]
                hi = a[j + h]
                a[j] = lo + hi
                a[j + h] = hi - lo
            i += 2 * h
        h *= 2
    return np.asarray(a)


def iwht(double[::1] a, int k):
    cdef Py_ssize_t n = a.shape[0], h, i, j
    cdef double lo, hi
    h = 1
    for _ in range(k):
        i = 0
        while i < n:
            for j in range(i, i + h):
                lo = a[j]
                hi = a[j + h]
                a[j] = lo - hi
                a[j + h] = hi + lo
            i += 2 * h
        h *= 2
    return np.asarray(a)


def recursion_decide(double c, double km1, long max_iter):
    cdef double z = 1.0, zn
    cdef long it
    for it in range(max_iter):
        zn = 1.0 - exp(-c * pow(z, km1))
        if zn < 1e-14:
            return 0
        if zn >= z:
            return 1
        z = zn
    return -1


cdef struct Sampler:
    const unsigned char* tables   # [C, 2, M]
    const long long* s_sets       # [C, 2, M]
    const long long* s_sizes      # [C, 2]
    const unsigned char* kills    # [C, km1]
    const double* cum_w           # [C]
    const double* pois_cdf        # [L]
    const double* u               # [n_u]
    Py_ssize_t n_u
    Py_ssize_t pos
    long long nodes
    long long node_cap
    int km1
    Py_ssize_t M
    int status
    double* pairs                 # [(depth + 1), km1, 2]
    double* prod                  # [(depth + 1), M]


cdef inline double next_u(Sampler* s) nogil:
    if s.pos >= s.n_u:
        s.status = EXHAUSTED
        return -1.0
    s.pos += 1
    return s.u[s.pos - 1]


cdef void variable(Sampler* s, int value, int togo, double* out_p, double* out_m) nogil:
    cdef double u, wp, wm, cp, cm, mp, mm, tot
    cdef Py_ssize_t eta, a, c, r, size, j, y, ln, side
    cdef long long pattern
    cdef int killed, yv
    cdef double* pairs
    cdef double* prod
    cdef const unsigned char* tp
    cdef const unsigned char* tm
    out_p[0] = 0.0
    out_m[0] = 0.0
    s.nodes += 1
    if s.nodes > s.node_cap:
        s.status = NODE_CAP
        return
    if togo == 0:
        if value > 0:
            out_p[0] = 1.0
        else:
            out_m[0] = 1.0
        return
    u = next_u(s)
    if s.status:
        return
    eta = 0
    while s.pois_cdf[eta] <= u:
        eta += 1
    wp = 0.5
    wm = 0.5
    side = 0 if value > 0 else 1
    pairs = s.pairs + togo * s.km1 * 2
    prod = s.prod + togo * s.M
    for a in range(eta):
        u = next_u(s)
        if s.status:
            return
        c = 0
        while s.cum_w[c] <= u:
            c += 1
        u = next_u(s)
        if s.status:
            return
        size = s.s_sizes[2 * c + side]
        r = <Py_ssize_t>(u * size)
        if r >= size:
            r = size - 1
        pattern = s.s_sets[(2 * c + side) * s.M + r]
        killed = 0
        for j in range(s.km1):
            yv = 1 if (pattern >> j) & 1 else -1
            variable(s, yv, togo - 1, &cp, &cm)
            if s.status:
                return
            pairs[2 * j] = cp
            pairs[2 * j + 1] = cm
            if s.kills[c * s.km1 + j] and cp == cm:
                killed = 1
                break
        if killed:
            continue
        prod[0] = 1.0
        ln = 1
        for j in range(s.km1):
            cp = pairs[2 * j]
            cm = pairs[2 * j + 1]
            for y in range(ln):
                prod[y + ln] = prod[y] * cp
                prod[y] = prod[y] * cm
            ln *= 2
        tp = s.tables + (2 * c) * s.M
        tm = s.tables + (2 * c + 1) * s.M
        mp = 0.0
        mm = 0.0
        for y in range(ln):
            if tp[y]:
                mp += prod[y]
            if tm[y]:
                mm += prod[y]
        wp *= mp
        wm *= mm
        tot = wp + wm
        if tot == 0.0:
            s.status = INCONSISTENT
            return
        wp /= tot
        wm /= tot
        if wp == 0.0 or wm == 0.0:
            break
    out_p[0] = wp
    out_m[0] = wm


def lazy_bias(const unsigned char[:, :, ::1] tables, const long long[:, :, ::1] s_sets,
              const long long[:, ::1] s_sizes, const unsigned char[:, ::1] kills,
              const double[::1] cum_w, const double[::1] pois_cdf, const double[::1] uniforms,
              int root_value, int depth, long long node_cap):
    cdef Sampler s
    cdef double wp = 0.0, wm = 0.0
    s.tables = &tables[0, 0, 0]
    s.s_sets = &s_sets[0, 0, 0]
    s.s_sizes = &s_sizes[0, 0]
    s.km1 = kills.shape[1]
    s.kills = &kills[0, 0]
    s.cum_w = &cum_w[0]
    s.pois_cdf = &pois_cdf[0]
    s.u = &uniforms[0]
    s.n_u = uniforms.shape[0]
    s.pos = 0
    s.nodes = 0
    s.node_cap = node_cap
    s.M = tables.shape[2]
    s.status = OK
    s.pairs = <double*>malloc((depth + 1) * s.km1 * 2 * sizeof(double))
    s.prod = <double*>malloc((depth + 1) * s.M * sizeof(double))
    if s.pairs == NULL or s.prod == NULL:
        free(s.pairs)
        free(s.prod)
        raise MemoryError()
    try:
        with nogil:
            variable(&s, root_value, depth, &wp, &wm)
    finally:
        free(s.pairs)
        free(s.prod)
    return s.status, wp, wm, s.pos, s.nodes


def enumerate_binary(int n, const long long[:, ::1] clause_vars,
                     const unsigned char[:, ::1] clause_tabs, long long capacity):
    cdef Py_ssize_t m = clause_vars.shape[0], k = clause_vars.shape[1], c, j
    cdef long long total = 1LL << n, x, idx, z = 0, zb = 0, kept = 0, pc, d
    cdef int ok
    out = np.zeros(min(capacity, total), dtype=np.int64)
    cdef long long[::1] sols = out
    with nogil:
        for x in range(total):
            ok = 1
            for c in range(m):
                idx = 0
                for j in range(k):
                    idx |= ((x >> clause_vars[c, j]) & 1) << j
                if not clause_tabs[c, idx]:
                    ok = 0
                    break
            if not ok:
                continue
            z += 1
            pc = 0
            for j in range(n):
                pc += (x >> j) & 1
            d = 2 * pc - n
            if -1 <= d <= 1:
                zb += 1
            if kept < capacity:
                sols[kept] = x
                kept += 1
    return z, zb, out[:kept].copy()


def enumerate_colorings(int n, int q, const long long[:, ::1] edges, long long capacity):
    cdef Py_ssize_t m = edges.shape[0], e, v
    cdef long long total = 1, x, z = 0, kept = 0
    cdef int ok
    for v in range(n):
        total *= q
    out = np.zeros((min(capacity, total), n), dtype=np.int8)
    cdef signed char[:, ::1] sols = out
    cdef signed char* dig = <signed char*>malloc(n * sizeof(signed char))
    if dig == NULL:
        raise MemoryError()
    try:
        with nogil:
            for v in range(n):
                dig[v] = 0
            for x in range(total):
                ok = 1
                for e in range(m):
                    if dig[edges[e, 0]] == dig[edges[e, 1]]:
                        ok = 0
                        break
                if ok:
                    z += 1
                    if kept < capacity:
                        for v in range(n):
                            sols[kept, v] = dig[v]
                        kept += 1
                v = 0
                while v < n:
                    dig[v] += 1
                    if dig[v] < q:
                        break
                    dig[v] = 0
                    v += 1
    finally:
        free(dig)
    return z, out[:kept].copy()
