"""Monte-Carlo laboratory for the Galton-Watson factor-tree ensemble.

Two routes compute the same quantities:

* the explicit route (:func:`sample_tree`, :func:`broadcast`, :func:`root_bias`)
  materializes a tree generation by generation with numpy and runs exact
  upward message passing on pair messages ``(w(+1), w(-1))``;
* the lazy route (:func:`reconstruction_estimate`, the default) samples tree,
  broadcast and root bias together depth-first inside a compiled kernel and
  skips every subtree that can no longer change the root bias.

The lazy route draws all of its randomness from a per-sample buffer of
uniforms seeded by ``(seed, sample index)``, so results do not depend on the
backend or on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.stats import poisson

from . import kernels
from .clause import partial_sets
from .ensembles import ClauseDistribution
from .errors import DomainError, SizeCapError, ValidationError, max_nodes

FROZEN_TOL = 1e-9
POISSON_TAIL = 1e-17


class TreeModel:
    """Per-distribution lookup tables shared by both sampling routes.

    Attributes
    ----------
    tables : ndarray, uint8, shape (C, 2, 2^(k-1))
        ``tables[c, 0, y] = phi_c(+1, y)`` and ``tables[c, 1, y] = phi_c(-1, y)``.
    s_sets, s_sizes : ndarray
        Sorted members of ``S+`` / ``S-`` per clause (padded) and their sizes.
    kills : ndarray, uint8, shape (C, k-1)
        ``kills[c, j]`` is set when summing ``phi_c`` over child ``j`` gives a
        value independent of the parent; an uninformative child ``j`` then
        makes the whole clause message constant.
    """

    def __init__(self, dist: ClauseDistribution):
        dist = dist.explicit()
        self.dist = dist
        self.k = k = dist.k
        if k < 2:
            raise DomainError("tree sampling needs k >= 2")
        M = 1 << (k - 1)
        C = len(dist.support)
        self.tables = np.zeros((C, 2, M), dtype=np.uint8)
        self.s_sets = np.zeros((C, 2, M), dtype=np.int64)
        self.s_sizes = np.zeros((C, 2), dtype=np.int64)
        self.kills = np.zeros((C, k - 1), dtype=np.uint8)
        for c, phi in enumerate(dist.clauses):
            v = phi.values.reshape(M, 2)
            self.tables[c, 0] = v[:, 1]
            self.tables[c, 1] = v[:, 0]
            ps = partial_sets(phi)
            for side, members in enumerate((ps.s_plus, ps.s_minus)):
                if not members:
                    raise ValidationError(f"clause {c} has an empty partial solution set")
                mem = sorted(members)
                self.s_sets[c, side, : len(mem)] = mem
                self.s_sizes[c, side] = len(mem)
            diff = self.tables[c, 0].astype(np.int64) - self.tables[c, 1]
            for j in range(k - 1):
                d = diff.reshape(-1, 2, 1 << j).sum(axis=1)
                self.kills[c, j] = not d.any()
        self.weights = dist.weights
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        self.cum_w = cum

    def poisson_cdf(self, mean):
        if mean == 0:
            return np.array([1.0])
        top = int(mean + 12.0 * math.sqrt(mean) + 40.0)
        while poisson.sf(top, mean) > POISSON_TAIL:
            top *= 2
        cdf = poisson.cdf(np.arange(top + 1), mean)
        cdf[-1] = 1.0
        return np.ascontiguousarray(cdf)


@dataclass(frozen=True, eq=False)
class TreeInstance:
    """A depth-``depth`` factor tree.

    Variables of generation ``g`` are numbered ``0..n_g-1``.  The clauses
    below generation ``g`` are listed in ``factor_parent[g]`` (parent index in
    generation ``g``) and ``clause_at[g]`` (support index); child ``j`` of
    clause ``f`` is variable ``f * (k - 1) + j`` of generation ``g + 1`` and
    sits at clause position ``j + 2`` (the parent is position 1).
    """

    k: int
    depth: int
    degrees: tuple
    factor_parent: tuple
    clause_at: tuple
    model: TreeModel

    @property
    def root_degree(self):
        return int(self.degrees[0][0]) if self.depth > 0 else 0

    @cached_property
    def generation_sizes(self):
        return [1] + [len(fp) * (self.k - 1) for fp in self.factor_parent]

    @property
    def n_variables(self):
        return int(sum(self.generation_sizes))

    @property
    def n_factors(self):
        return int(sum(len(fp) for fp in self.factor_parent))


@dataclass(frozen=True, eq=False)
class BroadcastSample:
    root_value: int
    assignment: tuple  # one int8 array per generation

    @property
    def leaf_slice(self):
        return self.assignment[-1]


@dataclass(frozen=True)
class BiasResult:
    h: float
    compatible_set: frozenset
    message_scale: float


def expected_tree_size(k, alpha, depth):
    """Expected number of variable nodes: ``sum_g (k alpha (k-1))^g``."""
    b = k * alpha * (k - 1)
    return float(sum(b**g for g in range(depth + 1)))


def _model_for(dist_or_model):
    return dist_or_model if isinstance(dist_or_model, TreeModel) else TreeModel(dist_or_model)


def _validate(alpha, depth):
    alpha = float(alpha)
    if not (alpha >= 0 and math.isfinite(alpha)):
        raise DomainError(f"alpha must be finite and non-negative, got {alpha}")
    if not isinstance(depth, (int, np.integer)) or depth < 0:
        raise DomainError(f"depth must be a non-negative integer, got {depth!r}")
    return alpha, int(depth)


def sample_tree(dist, alpha, depth, seed=0, root_degree=None, node_cap=None) -> TreeInstance:
    """Sample a factor tree: Poisson(k alpha) clauses below each variable, ``k - 1`` children per clause.

    ``root_degree`` optionally conditions the number of clauses at the root.
    """
    model = _model_for(dist)
    alpha, depth = _validate(alpha, depth)
    cap = max_nodes() if node_cap is None else int(node_cap)
    k = model.k
    if expected_tree_size(k, alpha, depth) > cap:
        raise SizeCapError(
            f"expected tree size {expected_tree_size(k, alpha, depth):.3g} exceeds the node cap {cap}"
        )
    rng = np.random.default_rng(seed)
    lam = k * alpha
    C = len(model.weights)
    n_vars, total = 1, 1
    degrees, parents, clauses = [], [], []
    for g in range(depth):
        deg = rng.poisson(lam, size=n_vars)
        if g == 0 and root_degree is not None:
            deg[0] = int(root_degree)
        fp = np.repeat(np.arange(n_vars), deg)
        ca = rng.choice(C, size=fp.shape[0], p=model.weights) if C > 1 else np.zeros(fp.shape[0], dtype=np.int64)
        n_vars = fp.shape[0] * (k - 1)
        total += n_vars
        if total > cap:
            raise SizeCapError(f"sampled tree exceeds the node cap {cap}")
        degrees.append(deg)
        parents.append(fp)
        clauses.append(ca.astype(np.int64))
    return TreeInstance(k, depth, tuple(degrees), tuple(parents), tuple(clauses), model)


def _pattern_bits(patterns, km1):
    bits = (patterns[:, None] >> np.arange(km1)[None, :]) & 1
    return np.where(bits == 1, 1, -1).astype(np.int8)


def broadcast(tree: TreeInstance, root_value=1, seed=0) -> BroadcastSample:
    """Top-down broadcast: children of each clause are uniform over the completions of the parent value."""
    if root_value not in (1, -1):
        raise DomainError(f"root value must be +1 or -1, got {root_value!r}")
    model = tree.model
    km1 = tree.k - 1
    rng = np.random.default_rng(seed)
    values = [np.array([root_value], dtype=np.int8)]
    for g in range(tree.depth):
        fp, ca = tree.factor_parent[g], tree.clause_at[g]
        side = (values[g][fp] < 0).astype(np.int64)
        sizes = model.s_sizes[ca, side]
        r = np.minimum((rng.random(fp.shape[0]) * sizes).astype(np.int64), sizes - 1)
        patterns = model.s_sets[ca, side, r]
        values.append(_pattern_bits(patterns, km1).reshape(-1))
    return BroadcastSample(int(root_value), tuple(values))


def _clause_messages(model, ca, cp, cm):
    """Messages ``(m(+1), m(-1))`` of clauses with children pairs ``cp``, ``cm`` of shape ``(F, k-1)``."""
    prod = np.ones((ca.shape[0], 1))
    for j in range(cp.shape[1]):
        prod = np.concatenate([prod * cm[:, j : j + 1], prod * cp[:, j : j + 1]], axis=1)
    mp = np.einsum("fy,fy->f", model.tables[ca, 0].astype(float), prod)
    mm = np.einsum("fy,fy->f", model.tables[ca, 1].astype(float), prod)
    return mp, mm


def root_bias(tree: TreeInstance, leaf_assignment) -> BiasResult:
    """Exact ``h = E[x_root | leaves]`` by upward message passing on pair messages."""
    leaves = np.asarray(leaf_assignment)
    sizes = tree.generation_sizes
    if leaves.shape != (sizes[-1],):
        raise ValidationError(f"leaf assignment must have length {sizes[-1]}")
    if np.any((leaves != 1) & (leaves != -1)):
        raise ValidationError("leaf values must be ±1")
    wp = (leaves > 0).astype(float)
    wm = (leaves < 0).astype(float)
    scale = np.zeros(sizes[-1])
    km1 = tree.k - 1
    for g in range(tree.depth - 1, -1, -1):
        fp, ca = tree.factor_parent[g], tree.clause_at[g]
        nf, nv = fp.shape[0], sizes[g]
        mp, mm = _clause_messages(tree.model, ca, wp.reshape(nf, km1), wm.reshape(nf, km1))
        fscale = scale.reshape(nf, km1).sum(axis=1)
        with np.errstate(divide="ignore"):
            lp = np.bincount(fp, weights=np.log(mp), minlength=nv)
            lm = np.bincount(fp, weights=np.log(mm), minlength=nv)
        fsum = np.bincount(fp, weights=fscale, minlength=nv)
        top = np.maximum(lp, lm)
        if np.any(np.isneginf(top)):
            raise ValidationError("leaf assignment is inconsistent with the tree's clauses")
        wp = np.exp(lp - top)
        wm = np.exp(lm - top)
        tot = wp + wm
        scale = fsum + top + np.log(tot)
        wp, wm = wp / tot, wm / tot
    p, m = float(wp[0]), float(wm[0])
    h = (p - m) / (p + m)
    if m == 0.0:
        compat = frozenset({1})
    elif p == 0.0:
        compat = frozenset({-1})
    else:
        compat = frozenset({-1, 1})
    return BiasResult(h, compat, float(scale[0]))


@dataclass
class ReconStats:
    alpha: float
    depth: int
    n_samples: int
    mean_abs_h: float
    mean_h_plus: float
    z_rate: float
    se_mean_abs_h: float
    se_mean_h_plus: float
    se_z_rate: float
    samples: np.ndarray | None = None

    def as_row(self):
        return {
            "alpha": self.alpha,
            "depth": self.depth,
            "n": self.n_samples,
            "mean_abs_h": self.mean_abs_h,
            "mean_h_plus": self.mean_h_plus,
            "z_rate": self.z_rate,
            "se_mean_abs_h": self.se_mean_abs_h,
            "se_mean_h_plus": self.se_mean_h_plus,
            "se_z_rate": self.se_z_rate,
        }


def _se(x):
    return float(np.std(x, ddof=1) / math.sqrt(x.shape[0])) if x.shape[0] > 1 else 0.0


def _lazy_chunk(args):
    model, alpha, depth, seed, start, stop, root_value, cap = args
    cdf = model.poisson_cdf(model.k * alpha)
    out = np.empty(stop - start)
    buf_len = 256
    for n, idx in enumerate(range(start, stop)):
        while True:
            u = np.random.default_rng([seed, idx]).random(buf_len)
            status, wp, wm, used, nodes = kernels.lazy_bias(
                model.tables, model.s_sets, model.s_sizes, model.kills, model.cum_w,
                cdf, u, root_value, depth, cap,
            )
            if status == kernels.EXHAUSTED:
                buf_len *= 4
                continue
            break
        if status == kernels.NODE_CAP:
            raise SizeCapError(f"sample {idx} exceeded the node cap {cap}")
        if status == kernels.INCONSISTENT:
            raise AssertionError("broadcast produced an inconsistent clause message")
        out[n] = (wp - wm) / (wp + wm)
    return out


def _explicit_chunk(args):
    model, alpha, depth, seed, start, stop, root_value, cap = args
    out = np.empty(stop - start)
    for n, idx in enumerate(range(start, stop)):
        tree = sample_tree(model, alpha, depth, seed=[seed, idx, 0], node_cap=cap)
        sample = broadcast(tree, root_value, seed=[seed, idx, 1])
        out[n] = root_bias(tree, sample.leaf_slice).h
    return out


def sample_biases(dist, alpha, depth, n_samples, seed=0, workers=1, method="lazy", root_value=1):
    """Root biases of ``n_samples`` independent (tree, broadcast) draws, in sample order."""
    model = _model_for(dist)
    alpha, depth = _validate(alpha, depth)
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    if method not in ("lazy", "explicit"):
        raise DomainError(f"unknown sampling method {method!r}")
    cap = max_nodes()
    fn = _lazy_chunk if method == "lazy" else _explicit_chunk
    workers = max(1, int(workers))
    bounds = np.linspace(0, n_samples, workers + 1).astype(int)
    jobs = [
        (model, alpha, depth, int(seed), int(a), int(b), int(root_value), cap)
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    if len(jobs) == 1:
        parts = [fn(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            parts = list(pool.map(fn, jobs))
    return np.concatenate(parts)


def summarize_biases(h, alpha, depth, keep_samples=False) -> ReconStats:
    h = np.asarray(h, dtype=float)
    absh = np.abs(h)
    z = (h >= 1.0 - FROZEN_TOL).astype(float)
    return ReconStats(
        alpha=float(alpha),
        depth=int(depth),
        n_samples=int(h.shape[0]),
        mean_abs_h=float(absh.mean()),
        mean_h_plus=float(h.mean()),
        z_rate=float(z.mean()),
        se_mean_abs_h=_se(absh),
        se_mean_h_plus=_se(h),
        se_z_rate=_se(z),
        samples=h if keep_samples else None,
    )


def reconstruction_estimate(
    dist, alpha, depth, n_samples, seed=0, workers=1, method="lazy", keep_samples=False
) -> ReconStats:
    """Monte-Carlo estimates of ``<|h|>``, ``<h(x^+)>`` and the naive reconstruction rate at ``depth``."""
    h = sample_biases(dist, alpha, depth, n_samples, seed, workers, method)
    return summarize_biases(h, alpha, depth, keep_samples)


@dataclass
class ConsistencyReport:
    n: int
    mean_diff: float
    mean_diff_se: float
    ratio_diff: float
    ratio_diff_se: float

    @property
    def mean_ok(self):
        return abs(self.mean_diff) <= 3.0 * self.mean_diff_se

    @property
    def ratio_ok(self):
        return abs(self.ratio_diff) <= 3.0 * self.ratio_diff_se

    @property
    def passed(self):
        return self.mean_ok and self.ratio_ok


def consistency_diagnostics(samples) -> ConsistencyReport:
    """Check the two consequences of consistency on samples of ``h(x^+)``.

    ``E X = E X^2`` and ``E sqrt((1-X)/(1+X)) = E sqrt(1-X^2)``; frozen samples
    ``X = 1`` contribute 0 to both sides of the second identity.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise DomainError("no samples")
    d1 = x - x * x
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(x >= 1.0, 0.0, np.sqrt((1.0 - x) / (1.0 + x)))
    d2 = ratio - np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    return ConsistencyReport(int(x.size), float(d1.mean()), _se(d1), float(d2.mean()), _se(d2))
