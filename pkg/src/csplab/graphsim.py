"""Finite random instances: sampling, exhaustive solving, overlaps and joint types.

Binary instances draw the ``k`` variables of every clause independently and
uniformly (repetitions allowed); coloring instances draw every edge uniformly
from the unordered pairs of distinct vertices.  Variable indices are 0-based.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln, logsumexp

from . import kernels
from .ensembles import ClauseDistribution
from .errors import DomainError, SizeCapError, ValidationError

MAX_BINARY_N = 30
MAX_COLORING_STATES = 10**8
MAX_SOLUTION_LIST = 10**6
MAX_EXACT_PAIRS = 10**6
MAX_AUTOCORR_N = 24


def n_clauses(n, alpha):
    """``round(alpha n)`` with halves rounded up."""
    return int(math.floor(alpha * n + 0.5))


@dataclass(frozen=True, eq=False)
class FactorGraphInstance:
    n: int
    alpha: float
    dist: ClauseDistribution
    clause_index: np.ndarray  # (m,) support indices
    clause_vars: np.ndarray  # (m, k) variable indices

    @property
    def m(self):
        return int(self.clause_index.shape[0])

    @property
    def k(self):
        return self.dist.k

    @property
    def clauses(self):
        return [(int(c), tuple(int(v) for v in vs)) for c, vs in zip(self.clause_index, self.clause_vars)]

    @property
    def empirical_clause_freq(self):
        counts = np.bincount(self.clause_index, minlength=len(self.dist.support))
        return counts / max(self.m, 1)

    def neighbors(self):
        adj = [set() for _ in range(self.n)]
        for vs in self.clause_vars:
            for a in vs:
                adj[a].update(int(b) for b in vs if b != a)
        return adj


@dataclass(frozen=True, eq=False)
class ColoringInstance:
    n: int
    q: int
    edges: np.ndarray  # (m, 2)
    alpha: float = math.nan

    @property
    def m(self):
        return int(self.edges.shape[0])

    def neighbors(self):
        adj = [set() for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].add(int(v))
            adj[v].add(int(u))
        return adj


@dataclass
class SolutionStats:
    Z: int
    Z_b: int | None
    color_freq: np.ndarray | None = None
    solutions: np.ndarray | None = None


@dataclass
class OverlapStats:
    no_solutions: bool
    overlap_values: np.ndarray | None = None
    overlap_counts: np.ndarray | None = None
    balanced_overlap_counts: np.ndarray | None = None
    exact: bool = True
    joint_type_dist2: np.ndarray | None = None
    row_marginal_dist2: np.ndarray | None = None
    col_marginal_dist2: np.ndarray | None = None
    joint_type_samples: list | None = None
    mean_joint_type_dist2: float | None = None


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _check_alpha(alpha):
    alpha = float(alpha)
    if not (alpha >= 0 and math.isfinite(alpha)):
        raise DomainError(f"alpha must be finite and non-negative, got {alpha}")
    return alpha


def sample_instance(dist: ClauseDistribution, n, alpha, seed=0) -> FactorGraphInstance:
    """Random binary instance with ``round(alpha n)`` i.i.d. clauses."""
    n, alpha = _check_n(n), _check_alpha(alpha)
    dist = dist.explicit()
    rng = np.random.default_rng(seed)
    m = n_clauses(n, alpha)
    C = len(dist.support)
    idx = rng.choice(C, size=m, p=dist.weights) if C > 1 else np.zeros(m, dtype=np.int64)
    vars_ = rng.integers(0, n, size=(m, dist.k))
    return FactorGraphInstance(n, alpha, dist, idx.astype(np.int64), vars_.astype(np.int64))


def sample_coloring_instance(n, q, alpha, seed=0) -> ColoringInstance:
    """Random graph with ``round(alpha n)`` edges, each uniform over unordered distinct pairs."""
    n, alpha = _check_n(n), _check_alpha(alpha)
    if q < 2:
        raise DomainError("q must be at least 2")
    if n < 2 and alpha > 0:
        raise DomainError("edges need at least two vertices")
    rng = np.random.default_rng(seed)
    m = n_clauses(n, alpha)
    u = rng.integers(0, n, size=m)
    v = rng.integers(0, n - 1, size=m) if n > 1 else np.zeros(m, dtype=np.int64)
    v = v + (v >= u)
    return ColoringInstance(n, int(q), np.stack([u, v], axis=1).astype(np.int64).reshape(m, 2), alpha)


def edge_proper_probability(counts):
    """Probability that a uniform random edge is proper under a coloring with class sizes ``counts``."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    return float(n / (n - 1) * (1.0 - np.sum((counts / n) ** 2)))


def solve_exhaustive(instance, keep_solutions=True) -> SolutionStats:
    """Exact solution count by enumeration (bitmask sweep or mixed-radix sweep)."""
    if isinstance(instance, FactorGraphInstance):
        if instance.n > MAX_BINARY_N:
            raise SizeCapError(f"binary enumeration is capped at n = {MAX_BINARY_N}")
        tabs = np.ascontiguousarray(
            np.array([instance.dist.clauses[c].values for c in instance.clause_index], dtype=np.uint8).reshape(
                instance.m, 1 << instance.k
            )
        )
        cap = MAX_SOLUTION_LIST + 1 if keep_solutions else 0
        z, zb, sols = kernels.enumerate_binary(
            instance.n, np.ascontiguousarray(instance.clause_vars.reshape(instance.m, instance.k)), tabs, cap
        )
        return SolutionStats(int(z), int(zb), None, sols if 0 < z <= MAX_SOLUTION_LIST else None)
    if isinstance(instance, ColoringInstance):
        if instance.q**instance.n > MAX_COLORING_STATES:
            raise SizeCapError(f"coloring enumeration is capped at q^n = {MAX_COLORING_STATES}")
        z, sols = kernels.enumerate_colorings(
            instance.n, instance.q, np.ascontiguousarray(instance.edges), MAX_SOLUTION_LIST + 1
        )
        freq = None
        if 0 < z <= MAX_SOLUTION_LIST:
            freq = np.array([(sols == c).mean() for c in range(instance.q)])
        else:
            sols = None
        return SolutionStats(int(z), None, freq, sols if keep_solutions else None)
    raise ValidationError(f"unsupported instance type {type(instance).__name__}")


def balance_symmetric(stats: SolutionStats, n):
    """Whether the solution set is closed under ``x -> -x``."""
    sols = stats.solutions
    comp = np.sort((~sols) & ((1 << n) - 1))
    return bool(np.array_equal(comp, sols))


def log_expected_Z(dist: ClauseDistribution, n, alpha):
    """``log E Z`` from the magnetization sum, in log domain."""
    n, alpha = _check_n(n), _check_alpha(alpha)
    if n > 10**4:
        raise SizeCapError("expected_Z is evaluated for n <= 10^4")
    m = n_clauses(n, alpha)
    j = np.arange(n + 1)
    theta = (2.0 * j - n) / n
    weights, _ = dist.theta_norm_terms
    mean_norm = weights @ dist.theta_norm2(theta)
    logc = gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)
    with np.errstate(divide="ignore"):
        terms = logc + (m * np.log(mean_norm) if m > 0 else 0.0)
    return float(logsumexp(terms))


def expected_Z(dist: ClauseDistribution, n, alpha):
    """``E Z = sum_j C(n, j) (E_phi ||phi||_theta^2)^m`` with ``theta = (2j - n)/n``."""
    return math.exp(log_expected_Z(dist, n, alpha))


def _compositions(n, q):
    for cuts in itertools.combinations(range(n + q - 1), q - 1):
        prev, parts = -1, []
        for c in cuts:
            parts.append(c - prev - 1)
            prev = c
        parts.append(n + q - 2 - prev)
        yield parts


def expected_Z_coloring(n, q, alpha):
    """``E Z`` for random graph ``q``-coloring: multinomial sum of the per-edge properness factor."""
    n, alpha = _check_n(n), _check_alpha(alpha)
    if math.comb(n + q - 1, q - 1) > 10**7:
        raise SizeCapError("too many color-count vectors for the exact sum")
    m = n_clauses(n, alpha)
    terms = []
    for parts in _compositions(n, q):
        p = edge_proper_probability(parts) if n > 1 else 1.0
        logm = gammaln(n + 1) - sum(gammaln(x + 1) for x in parts)
        if m == 0:
            terms.append(logm)
        elif p > 0:
            terms.append(logm + m * math.log(p))
    return math.exp(logsumexp(terms)) if terms else 0.0


def _popcount(x):
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        out += x & 1
        x = x >> 1
    return out


def _pair_distance_counts(sols, n):
    """Number of ordered solution pairs at each Hamming distance, exactly."""
    if n <= MAX_AUTOCORR_N:
        ind = np.zeros(1 << n)
        ind[sols] = 1.0
        kernels.wht(ind, n)
        ind *= ind
        kernels.iwht(ind, n)
        auto = np.rint(ind / (1 << n)).astype(np.int64)
        return np.bincount(_popcount(np.arange(1 << n)), weights=auto, minlength=n + 1).astype(np.int64)
    z = sols.shape[0]
    if z * z > MAX_EXACT_PAIRS * 100:
        return None
    out = np.zeros(n + 1, dtype=np.int64)
    for s in sols:
        out += np.bincount(_popcount(sols ^ s), minlength=n + 1)
    return out


def overlap_stats(instance, n_pairs=100_000, seed=0, stats: SolutionStats | None = None) -> OverlapStats:
    """Overlaps (binary) or joint types (coloring) of uniform independent solution pairs.

    Binary overlap histograms are exact over all ordered pairs (Walsh-Hadamard
    autocorrelation of the solution indicator); coloring pairs are enumerated
    when ``Z^2 <= 10^6`` and sampled otherwise.  ``mean_joint_type_dist2`` is
    always the exact average of ``||nu - v-bar||^2`` over all ordered pairs.
    """
    if stats is None:
        stats = solve_exhaustive(instance)
    if stats.Z == 0:
        return OverlapStats(no_solutions=True)
    if stats.solutions is None:
        raise SizeCapError("solution list was not materialized (too many solutions)")
    sols = stats.solutions
    n = instance.n
    rng = np.random.default_rng(seed)
    if isinstance(instance, FactorGraphInstance):
        values = (n - 2.0 * np.arange(n + 1)) / n
        counts = _pair_distance_counts(sols, n)
        exact = counts is not None
        if not exact:
            i = rng.integers(0, sols.shape[0], size=n_pairs)
            j = rng.integers(0, sols.shape[0], size=n_pairs)
            counts = np.bincount(_popcount(sols[i] ^ sols[j]), minlength=n + 1)
        bal = sols[np.abs(2 * _popcount(sols) - n) <= 1]
        bcounts = _pair_distance_counts(bal, n) if bal.size else np.zeros(n + 1, dtype=np.int64)
        return OverlapStats(False, values[::-1], counts[::-1], None if bcounts is None else bcounts[::-1], exact)

    q = instance.q
    z = sols.shape[0]
    if z * z <= MAX_EXACT_PAIRS:
        i, j = np.divmod(np.arange(z * z), z)
        exact = True
    else:
        i = rng.integers(0, z, size=n_pairs)
        j = rng.integers(0, z, size=n_pairs)
        exact = False
    codes = sols[i].astype(np.int64) * q + sols[j]
    nu = np.zeros((codes.shape[0], q * q))
    for t in range(n):
        nu[np.arange(codes.shape[0]), codes[:, t]] += 1.0
    nu = (nu / n).reshape(-1, q, q)
    d = nu - 1.0 / q**2
    dist2 = np.sum(d * d, axis=(1, 2))
    rows = np.sum(np.sum(d, axis=2) ** 2, axis=1)
    cols = np.sum(np.sum(d, axis=1) ** 2, axis=1)
    return OverlapStats(
        False,
        exact=exact,
        joint_type_dist2=dist2,
        row_marginal_dist2=rows,
        col_marginal_dist2=cols,
        joint_type_samples=[nu[s] for s in range(min(100, nu.shape[0]))],
        mean_joint_type_dist2=mean_joint_type_dist2(sols, q),
    )


def mean_joint_type_dist2(sols, q):
    """Exact mean of ``||nu - v-bar||^2`` over all ordered pairs of the given colorings.

    With ``M_ts`` the fraction of colorings where ``x_t = x_s``, the mean is
    ``(1/n^2) sum_ts M_ts^2 - 1/q^2``.
    """
    sols = np.asarray(sols)
    z, n = sols.shape
    agree = np.zeros((n, n))
    for c in range(q):
        a = (sols == c).astype(float)
        agree += a.T @ a
    agree /= z
    return float(np.sum(agree**2) / n**2 - 1.0 / q**2)


def variable_distances(instance, i):
    """Hop distances from variable ``i``; -1 for unreachable variables."""
    adj = instance.neighbors()
    dist = np.full(instance.n, -1, dtype=np.int64)
    dist[i] = 0
    queue = deque([i])
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if dist[b] < 0:
                dist[b] = dist[a] + 1
                queue.append(b)
    return dist


def correlation_decay(instance, i, r, stats: SolutionStats | None = None):
    """Exact ``|| mu_{i, B} - mu_i mu_B ||_TV`` with ``B`` the variables at distance ``>= r`` from ``i``.

    Distances are hops between variables that share a clause; ``B`` is
    restricted to the connected component of ``i`` (other components are
    independent of ``x_i`` and do not change the distance).
    """
    if not 0 <= i < instance.n:
        raise DomainError(f"variable {i} outside 0..{instance.n - 1}")
    if r < 1:
        raise DomainError("radius must be at least 1")
    if stats is None:
        stats = solve_exhaustive(instance)
    if stats.Z == 0:
        raise ValidationError("instance has no solutions")
    if stats.solutions is None:
        raise SizeCapError("solution list was not materialized (too many solutions)")
    d = variable_distances(instance, i)
    boundary = np.flatnonzero(d >= r)
    if boundary.size == 0:
        return 0.0
    sols = stats.solutions
    if isinstance(instance, FactorGraphInstance):
        xi = (sols >> i) & 1
        key = np.zeros(sols.shape[0], dtype=np.int64)
        for b, v in enumerate(boundary):
            key |= ((sols >> v) & 1) << b
        ncat = 2
    else:
        xi = sols[:, i].astype(np.int64)
        _, key = np.unique(sols[:, boundary], axis=0, return_inverse=True)
        key = key.reshape(-1)
        ncat = instance.q
    _, key = np.unique(key, return_inverse=True)
    joint = np.zeros((ncat, key.max() + 1))
    np.add.at(joint, (xi, key), 1.0)
    joint /= sols.shape[0]
    prod = joint.sum(axis=1)[:, None] * joint.sum(axis=0)[None, :]
    return float(0.5 * np.abs(joint - prod).sum())


def write_instance(path, instance):
    if isinstance(instance, FactorGraphInstance):
        data = {
            "n": instance.n,
            "alpha": instance.alpha,
            "clauses": [{"dist_index": c, "vars": list(vs)} for c, vs in instance.clauses],
        }
    else:
        data = {"n": instance.n, "q": instance.q, "edges": instance.edges.tolist()}
    Path(path).write_text(json.dumps(data, sort_keys=True) + "\n")


def read_instance(path, dist: ClauseDistribution | None = None):
    """Read a binary instance (needs ``dist``) or a coloring instance."""
    try:
        data = json.loads(Path(path).read_text())
        n = int(data["n"])
        if "edges" in data:
            edges = np.array(data["edges"], dtype=np.int64).reshape(-1, 2)
            if edges.size and (edges.min() < 0 or edges.max() >= n or np.any(edges[:, 0] == edges[:, 1])):
                raise ValidationError("edge endpoints must be distinct vertices in range")
            return ColoringInstance(n, int(data["q"]), edges)
        if dist is None:
            raise ValidationError("a binary instance needs its clause distribution")
        dist = dist.explicit()
        cl = data["clauses"]
        idx = np.array([c["dist_index"] for c in cl], dtype=np.int64)
        vars_ = np.array([c["vars"] for c in cl], dtype=np.int64).reshape(len(cl), dist.k)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed instance file {path}: {exc}") from exc
    if idx.size and (idx.min() < 0 or idx.max() >= len(dist.support)):
        raise ValidationError("dist_index out of range")
    if vars_.size and (vars_.min() < 0 or vars_.max() >= n):
        raise ValidationError("variable index out of range")
    return FactorGraphInstance(n, float(data.get("alpha", math.nan)), dist, idx, vars_)
