"""Pure-Python/numpy reference implementations of the hot kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature.  The two are required to produce bit-identical results: the
floating-point operations are performed in the same order, and all
randomness is consumed from a caller-supplied buffer of uniforms.
"""

import math

import numpy as np

# status codes shared with the compiled kernel
OK = 0
EXHAUSTED = 1
NODE_CAP = 2
INCONSISTENT = 3

_CHUNK = 1 << 18


def wht(a, k):
    """In-place unnormalized Walsh-Hadamard butterfly ``(lo, hi) -> (lo + hi, hi - lo)``."""
    for i in range(k):
        v = a.reshape(-1, 2, 1 << i)
        lo = v[:, 0, :].copy()
        v[:, 0, :] += v[:, 1, :]
        v[:, 1, :] -= lo
    return a


def iwht(a, k):
    """In-place inverse butterfly ``(lo, hi) -> (lo - hi, lo + hi)``."""
    for i in range(k):
        v = a.reshape(-1, 2, 1 << i)
        lo = v[:, 0, :].copy()
        v[:, 0, :] -= v[:, 1, :]
        v[:, 1, :] += lo
    return a


def recursion_decide(c, km1, max_iter):
    """Iterate ``z <- 1 - exp(-c z^km1)`` from ``z = 1``.

    Returns 0 once ``z < 1e-14`` (the iteration collapses), 1 once ``z`` stops
    decreasing (a positive fixed point has been reached) and -1 if neither
    happens within ``max_iter`` steps.
    """
    z = 1.0
    for _ in range(max_iter):
        zn = 1.0 - math.exp(-c * math.pow(z, km1))
        if zn < 1e-14:
            return 0
        if zn >= z:
            return 1
        z = zn
    return -1


class _Sampler:
    """Depth-first lazy sampler of (tree, broadcast, root bias).

    The tree is never materialized: a subtree is only generated while its
    contribution can still change the root bias.  A variable stops spawning
    clauses once its pair is frozen, and a clause stops spawning children once
    an uninformative child makes the clause message constant (``kills``).
    """

    def __init__(self, tables, s_sets, s_sizes, kills, cum_w, pois_cdf, uniforms, node_cap):
        self.tables = tables.tolist()
        self.s_sets = s_sets.tolist()
        self.s_sizes = s_sizes.tolist()
        self.kills = kills.tolist()
        self.cum_w = cum_w.tolist()
        self.pois_cdf = pois_cdf.tolist()
        self.u = uniforms.tolist()
        self.n_u = len(self.u)
        self.km1 = kills.shape[1]
        self.node_cap = node_cap
        self.pos = 0
        self.nodes = 0
        self.status = OK

    def _next(self):
        if self.pos >= self.n_u:
            self.status = EXHAUSTED
            return -1.0
        u = self.u[self.pos]
        self.pos += 1
        return u

    def variable(self, value, togo):
        self.nodes += 1
        if self.nodes > self.node_cap:
            self.status = NODE_CAP
            return 0.0, 0.0
        if togo == 0:
            return (1.0, 0.0) if value > 0 else (0.0, 1.0)
        u = self._next()
        if self.status:
            return 0.0, 0.0
        cdf = self.pois_cdf
        eta = 0
        while cdf[eta] <= u:
            eta += 1
        wp = 0.5
        wm = 0.5
        km1 = self.km1
        side = 0 if value > 0 else 1
        for _ in range(eta):
            u = self._next()
            if self.status:
                return 0.0, 0.0
            c = 0
            while self.cum_w[c] <= u:
                c += 1
            u = self._next()
            if self.status:
                return 0.0, 0.0
            size = self.s_sizes[c][side]
            r = int(u * size)
            if r >= size:
                r = size - 1
            pattern = self.s_sets[c][side][r]
            pairs = []
            killed = False
            for j in range(km1):
                y = 1 if (pattern >> j) & 1 else -1
                cp, cm = self.variable(y, togo - 1)
                if self.status:
                    return 0.0, 0.0
                pairs.append((cp, cm))
                if self.kills[c][j] and cp == cm:
                    killed = True
                    break
            if killed:
                continue
            prod = [1.0]
            for cp, cm in pairs:
                hi = [p * cp for p in prod]
                prod = [p * cm for p in prod]
                prod.extend(hi)
            tp = self.tables[c][0]
            tm = self.tables[c][1]
            mp = 0.0
            mm = 0.0
            for y in range(len(prod)):
                if tp[y]:
                    mp += prod[y]
                if tm[y]:
                    mm += prod[y]
            wp *= mp
            wm *= mm
            s = wp + wm
            if s == 0.0:
                self.status = INCONSISTENT
                return 0.0, 0.0
            wp /= s
            wm /= s
            if wp == 0.0 or wm == 0.0:
                break
        return wp, wm


def lazy_bias(tables, s_sets, s_sizes, kills, cum_w, pois_cdf, uniforms, root_value, depth, node_cap):
    """Sample one tree + broadcast lazily and return its root pair.

    Returns ``(status, w_plus, w_minus, uniforms_used, nodes_visited)``.
    """
    smp = _Sampler(tables, s_sets, s_sizes, kills, cum_w, pois_cdf, uniforms, node_cap)
    wp, wm = smp.variable(root_value, depth)
    return smp.status, wp, wm, smp.pos, smp.nodes


def enumerate_binary(n, clause_vars, clause_tabs, capacity):
    """All satisfying assignments of a binary instance, ascending by index.

    Returns ``(Z, Z_balanced, solutions)`` where ``solutions`` holds the first
    ``min(Z, capacity)`` satisfying indices.
    """
    m, k = clause_vars.shape
    total = 1 << n
    z = 0
    zb = 0
    found = []
    kept = 0
    for start in range(0, total, _CHUNK):
        x = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        ok = np.ones(x.shape[0], dtype=bool)
        for c in range(m):
            idx = np.zeros(x.shape[0], dtype=np.int64)
            for j in range(k):
                idx |= ((x >> clause_vars[c, j]) & 1) << j
            ok &= clause_tabs[c][idx].astype(bool)
        sol = x[ok]
        z += sol.shape[0]
        pc = np.zeros(sol.shape[0], dtype=np.int64)
        for b in range(n):
            pc += (sol >> b) & 1
        zb += int(np.count_nonzero(np.abs(2 * pc - n) <= 1))
        if kept < capacity:
            take = sol[: capacity - kept]
            found.append(take)
            kept += take.shape[0]
    sols = np.concatenate(found) if found else np.zeros(0, dtype=np.int64)
    return z, zb, sols


def enumerate_colorings(n, q, edges, capacity):
    """All proper ``q``-colorings, vertex 0 being the least significant digit.

    Returns ``(Z, solutions)`` with ``solutions`` an ``int8`` array of shape
    ``(min(Z, capacity), n)``.
    """
    total = q**n
    z = 0
    found = []
    kept = 0
    powers = q ** np.arange(n, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % q
        ok = np.ones(idx.shape[0], dtype=bool)
        for u, v in edges:
            ok &= digits[:, u] != digits[:, v]
        sol = digits[ok]
        z += sol.shape[0]
        if kept < capacity:
            take = sol[: capacity - kept]
            found.append(take)
            kept += take.shape[0]
    sols = np.concatenate(found).astype(np.int8) if found else np.zeros((0, n), dtype=np.int8)
    return z, sols
