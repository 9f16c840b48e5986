"""Clause distributions, the ensemble conditions, and the constants Omega and Omega-hat.

A :class:`ClauseDistribution` is a weighted finite support of clauses.  Large
NAE ensembles are stored as a single permutation-symmetric representative
whose uniform sign-flip orbit is the actual distribution; every quantity that
depends on the flips only through ``|phi_Q|`` is read off the representative,
and theta-dependent expectations are grouped by the number of flipped signs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import comb

from .clause import ClauseTable, fourier_transform, popcounts
from .errors import DomainError, ValidationError

WEIGHT_TOL = 1e-12
NAE_EXPLICIT_MAX_K = 12
FULL_SYMMETRY_BUDGET = 10**6


@dataclass(frozen=True)
class ClauseSummary:
    """Fourier statistics of one clause that the threshold formulas consume.

    Attributes
    ----------
    norm2 : float
        ``||phi||^2 = phi_empty`` (Boolean clauses).
    influence1 : float
        ``I_1(phi) = sum_{Q containing 1} phi_Q^2``.
    level_sums : ndarray
        ``L_d = sum_{|Q|=d} phi_Q``, so that ``||phi||_theta^2 = sum_d L_d theta^d``.
    sq_level_sums : ndarray
        ``sum_{|Q|=d} phi_Q^2``, so that ``(phi, T_theta phi) = sum_d . theta^d``.
    deriv_sq_levels : ndarray
        entry ``d`` is ``sum_{Q containing 1, |Q| = d+1} phi_Q^2``; the derivative's level-``d`` weight.
    deriv_abs_levels : ndarray
        the same with ``|phi_Q|`` in place of ``phi_Q^2``.
    """

    norm2: float
    influence1: float
    level_sums: np.ndarray
    sq_level_sums: np.ndarray
    deriv_sq_levels: np.ndarray
    deriv_abs_levels: np.ndarray


def summarize(phi: ClauseTable) -> ClauseSummary:
    spec = fourier_transform(phi)
    c = spec.coeffs
    k = phi.k
    pc = popcounts(k)
    has1 = (np.arange(1 << k) & 1).astype(bool)
    deriv_sq = np.bincount(pc[has1] - 1, weights=c[has1] ** 2, minlength=k)
    deriv_abs = np.bincount(pc[has1] - 1, weights=np.abs(c[has1]), minlength=k)
    return ClauseSummary(
        norm2=float(c[0]),
        influence1=float(deriv_sq.sum()),
        level_sums=spec.level_sums(),
        sq_level_sums=spec.level_sums(power=2),
        deriv_sq_levels=deriv_sq,
        deriv_abs_levels=deriv_abs,
    )


def krawtchouk(k, d, j):
    """``K_d(j) = sum_{|Q|=d} gamma_Q(s)`` for any ``s`` with ``j`` entries equal to -1."""
    return sum((-1) ** i * comb(j, i, exact=True) * comb(k - j, d - i, exact=True) for i in range(d + 1))


@dataclass(frozen=True, eq=False)
class ClauseDistribution:
    """A law ``p`` over clauses of a common arity.

    Parameters
    ----------
    k : int
        Arity.
    support : tuple of (ClauseTable, float)
        Clauses and their probabilities.
    name : str, optional
    symmetry_note : str, optional
        Human-readable description of any symmetry the representation exploits.
    sign_orbit : bool
        If true, ``support`` holds a single permutation-symmetric clause
        ``phi`` and the distribution is uniform over ``x -> phi(s * x)``,
        ``s`` in ``{-1,+1}^k``.
    """

    k: int
    support: tuple
    name: str | None = None
    symmetry_note: str | None = None
    sign_orbit: bool = False

    def __post_init__(self):
        support = tuple((phi, float(w)) for phi, w in self.support)
        if not support:
            raise ValidationError("distribution support is empty")
        for phi, w in support:
            if not isinstance(phi, ClauseTable):
                raise ValidationError("support entries must be ClauseTable instances")
            if phi.k != self.k:
                raise ValidationError(f"clause of arity {phi.k} in a k={self.k} distribution")
            if not phi.is_boolean:
                raise ValidationError("support clauses must be Boolean")
            if not (w > 0 and math.isfinite(w)):
                raise ValidationError(f"weights must be positive, got {w}")
        total = math.fsum(w for _, w in support)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"weights sum to {total!r}, not 1")
        if self.sign_orbit and len(support) != 1:
            raise ValidationError("a sign-orbit distribution has exactly one representative")
        object.__setattr__(self, "support", support)

    @property
    def clauses(self):
        return [phi for phi, _ in self.support]

    @property
    def weights(self):
        return np.array([w for _, w in self.support])

    @cached_property
    def summaries(self):
        cache = {}
        out = []
        for phi in self.clauses:
            key = phi.key()
            if key not in cache:
                cache[key] = summarize(phi)
            out.append(cache[key])
        return out

    def expect(self, fn):
        """``E_phi fn(summary)`` for sign-invariant statistics."""
        return float(math.fsum(w * fn(s) for w, s in zip(self.weights, self.summaries)))

    @cached_property
    def theta_norm_terms(self):
        """``(weights, polys)`` with ``||phi||_theta^2 = polys[i] @ theta^d`` for term ``i``."""
        if not self.sign_orbit:
            return self.weights, np.array([s.level_sums for s in self.summaries])
        k = self.k
        rep = fourier_transform(self.clauses[0]).coeffs
        a = np.array([rep[(1 << d) - 1] for d in range(k + 1)])
        js = np.arange(k + 1)
        weights = np.array([comb(k, j, exact=True) for j in js], dtype=float) / 2.0**k
        polys = np.array([[a[d] * krawtchouk(k, d, j) for d in range(k + 1)] for j in js])
        return weights, polys

    def theta_norm2(self, theta):
        """Matrix of ``||phi||_theta^2`` with shape ``(n_terms, len(theta))``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        _, polys = self.theta_norm_terms
        powers = theta[None, :] ** np.arange(self.k + 1)[:, None]
        return polys @ powers

    def explicit(self):
        """An equivalent distribution with the sign orbit written out."""
        if not self.sign_orbit:
            return self
        if self.k > NAE_EXPLICIT_MAX_K:
            raise DomainError(
                f"explicit support for k={self.k} would need 2^{self.k} clauses; "
                f"sampling needs k <= {NAE_EXPLICIT_MAX_K}"
            )
        rep = self.clauses[0]
        w = 2.0**-self.k
        return ClauseDistribution(
            self.k, tuple((rep.flipped(m), w) for m in range(1 << self.k)), name=self.name
        )


def _hyp2col_table(k):
    idx = np.arange(1 << k)
    return ClauseTable(k, ((idx != 0) & (idx != (1 << k) - 1)).astype(np.uint8))


def builtin(name: str, k: int) -> ClauseDistribution:
    """One of the worked example ensembles.

    ``hyp2col``: hypergraph 2-coloring, the clause forbids monochromatic edges.
    ``nae``: NAE-SAT, uniform over the ``2^k`` sign patterns of the same clause.
    ``xor``: k-XOR, ``(1 +/- gamma_[k]) / 2`` with probability 1/2 each; ``k`` must be even.
    """
    if not isinstance(k, (int, np.integer)) or k < 2:
        raise DomainError(f"builtin ensembles need an integer k >= 2, got {k!r}")
    k = int(k)
    if name == "hyp2col":
        return ClauseDistribution(k, ((_hyp2col_table(k), 1.0),), name=f"hyp2col({k})")
    if name == "nae":
        rep = _hyp2col_table(k)
        note = "uniform over sign flips of one permutation-symmetric clause; all members share norms, influences and |coefficients|"
        if k > NAE_EXPLICIT_MAX_K:
            return ClauseDistribution(k, ((rep, 1.0),), name=f"nae({k})", symmetry_note=note, sign_orbit=True)
        w = 2.0**-k
        support = tuple((rep.flipped(m), w) for m in range(1 << k))
        return ClauseDistribution(k, support, name=f"nae({k})", symmetry_note=note)
    if name == "xor":
        if k % 2:
            raise DomainError(f"xor ensemble requires even k (conditions fail for odd k), got {k}")
        parity = popcounts(k) % 2  # number of +1 entries mod 2
        # gamma_[k](x) = (-1)^(#minus) and #minus = k - #plus, so gamma = +1 iff #plus even (k even)
        plus = (parity == 0).astype(np.uint8)
        support = ((ClauseTable(k, plus), 0.5), (ClauseTable(k, 1 - plus), 0.5))
        return ClauseDistribution(k, support, name=f"xor({k})")
    raise DomainError(f"unknown ensemble {name!r}; choose hyp2col, nae or xor")


def load_distribution(path) -> ClauseDistribution:
    """Read ``{"k": int, "clauses": [{"truth_table": str, "weight": float}, ...]}``."""
    try:
        data = json.loads(Path(path).read_text())
        k = int(data["k"])
        entries = data["clauses"]
        support = tuple(
            (ClauseTable.from_string(k, str(e["truth_table"])), float(e["weight"])) for e in entries
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed distribution file {path}: {exc}") from exc
    return ClauseDistribution(k, support, name=Path(path).stem)


def dump_distribution(path, dist: ClauseDistribution):
    dist = dist.explicit()
    data = {
        "k": dist.k,
        "clauses": [{"truth_table": phi.to_string(), "weight": w} for phi, w in dist.support],
    }
    Path(path).write_text(json.dumps(data) + "\n")


@dataclass
class Check:
    passed: bool
    witness: object = None
    detail: str = ""


@dataclass
class ConditionReport:
    permutation_symmetric: Check
    balanced: Check
    feasible: Check
    dominance: Check
    dominance_worst_theta: float
    dominance_margin: float
    norm_floor: float
    l1_exponent_a: float
    decay_constant_C: float
    decay_argmin_theta: float
    grid_resolution: int
    influence_identity_error: float
    low_degree_ratios: list = field(default_factory=list)

    @property
    def all_passed(self):
        return all(
            c.passed for c in (self.permutation_symmetric, self.balanced, self.feasible, self.dominance)
        )


@dataclass(frozen=True)
class EnsembleConstants:
    omega: float
    omega_hat: float
    advisory: bool = False


def _weighted_multiset(dist):
    acc = {}
    for phi, w in dist.support:
        acc[phi.key()] = acc.get(phi.key(), 0.0) + w
    return acc


def _check_permutation_symmetry(dist):
    k = dist.k
    clauses = {phi.key(): phi for phi in dist.clauses}
    base = _weighted_multiset(dist)
    if len(clauses) * math.factorial(k) <= FULL_SYMMETRY_BUDGET:
        perms, method = itertools.permutations(range(k)), "full"
    else:
        # the symmetric group is generated by one transposition and one k-cycle
        swap = [1, 0] + list(range(2, k))
        cycle = list(range(1, k)) + [0]
        perms, method = [swap, cycle], "generators"
    for perm in perms:
        moved = {}
        for key, w in base.items():
            pk = clauses[key].permuted(perm).key()
            moved[pk] = moved.get(pk, 0.0) + w
        for key in set(base) | set(moved):
            if abs(base.get(key, 0.0) - moved.get(key, 0.0)) > WEIGHT_TOL:
                return Check(False, witness=list(perm), detail=method)
    return Check(True, detail=method)


def _check_balance(dist):
    for n, phi in enumerate(dist.clauses):
        bad = np.flatnonzero(phi.values != phi.values[::-1])
        if bad.size:
            return Check(False, witness={"clause": n, "assignment": int(bad[0])})
    return Check(True)


def _check_feasibility(dist):
    for n, phi in enumerate(dist.clauses):
        for i in range(1, phi.k + 1):
            v = phi.values.reshape(-1, 2, 1 << (i - 1))
            ext = v.max(axis=1)
            if not ext.all():
                blk, low = np.argwhere(ext == 0)[0]
                rest = int(blk) * (1 << (i - 1)) + int(low)
                return Check(False, witness={"clause": n, "position": i, "partial": rest})
    return Check(True)


def theta_grid(size):
    """Symmetric uniform grid on ``[-1, 1]`` with both endpoints and 0 when ``size`` is odd."""
    if size < 3:
        raise DomainError(f"theta grid needs at least 3 points, got {size}")
    return np.linspace(-1.0, 1.0, int(size))


def _mean_log(weights, values):
    with np.errstate(divide="ignore"):
        logs = np.log(values)
    return weights @ logs


def check_conditions(dist: ClauseDistribution, theta_grid_size: int = 201) -> ConditionReport:
    """Verify the ensemble conditions and estimate the Fourier constants ``a`` and ``C``."""
    grid = theta_grid(theta_grid_size)
    if dist.sign_orbit:
        sym = _check_permutation_symmetry(
            ClauseDistribution(dist.k, dist.support)
        )  # permutation-symmetric representative => symmetric orbit
        rep_only = ClauseDistribution(dist.k, dist.support)
        bal, feas = _check_balance(rep_only), _check_feasibility(rep_only)
    else:
        sym, bal, feas = _check_permutation_symmetry(dist), _check_balance(dist), _check_feasibility(dist)

    weights, _ = dist.theta_norm_terms
    norms_theta = dist.theta_norm2(grid)
    norms0 = dist.theta_norm2([0.0])[:, 0]
    base = float(_mean_log(weights, norms0))
    margins = _mean_log(weights, norms_theta) - base
    worst = int(np.argmax(margins))
    dominance = Check(bool(margins[worst] <= 1e-12), witness=float(grid[worst]))

    k = dist.k
    norm_floor = min(s.norm2 for s in dist.summaries)
    a_est = -math.inf
    c_est, c_theta = math.inf, math.nan
    inner = grid[(grid > 0) & (grid < 1)]
    infl_err = 0.0
    ratios = np.zeros(k)
    pc = popcounts(k)
    for phi in {p.key(): p for p in dist.clauses}.values():
        coeffs = fourier_transform(phi).coeffs
        sq = coeffs**2
        nonempty = sq[1:].sum()
        if nonempty > 0:
            for ell in range(1, k + 1):
                ratios[ell - 1] = max(ratios[ell - 1], sq[(pc >= 1) & (pc <= ell)].sum() / nonempty)
        for i in range(1, k + 1):
            has_i = ((np.arange(1 << k) >> (i - 1)) & 1).astype(bool)
            l1 = np.abs(coeffs[has_i]).sum()
            infl = sq[has_i].sum()
            infl_err = max(infl_err, abs(infl - (1.0 - coeffs[0]) / 2.0))
            if l1 > 0:
                a_est = max(a_est, math.log(l1) / math.log(k))
            if infl > 0 and inner.size:
                levels = np.bincount(pc[has_i] - 1, weights=sq[has_i], minlength=k)
                r = (inner[None, :] ** (2 * np.arange(k))[:, None] * levels[:, None]).sum(0) / infl
                with np.errstate(divide="ignore"):
                    cvals = -np.log(r) / (k * (1.0 - inner))
                j = int(np.argmin(cvals))
                if cvals[j] < c_est:
                    c_est, c_theta = float(cvals[j]), float(inner[j])
    if not (bal.passed and feas.passed):
        infl_err = math.nan
    return ConditionReport(
        permutation_symmetric=sym,
        balanced=bal,
        feasible=feas,
        dominance=dominance,
        dominance_worst_theta=float(grid[worst]),
        dominance_margin=float(margins[worst]),
        norm_floor=float(norm_floor),
        l1_exponent_a=float(a_est),
        decay_constant_C=float(c_est),
        decay_argmin_theta=c_theta,
        grid_resolution=int(theta_grid_size),
        influence_identity_error=float(infl_err),
        low_degree_ratios=ratios.tolist(),
    )


def _inv_omega(dist):
    return dist.expect(lambda s: 2.0 * s.influence1 / s.norm2 if s.norm2 > 0 else math.inf)


def omega(dist: ClauseDistribution) -> float:
    """``Omega_k = 1 / E_phi[2 I_1(phi) / ||phi||^2]``; ``inf`` when every influence vanishes."""
    inv = _inv_omega(dist)
    return math.inf if inv == 0 else 1.0 / inv


def omega_hat(dist: ClauseDistribution) -> float:
    """``Omega-hat_k = -1 / E_phi log ||phi||^2``; ``inf`` when every clause has norm 1."""
    with np.errstate(divide="ignore"):
        m = dist.expect(lambda s: math.log(s.norm2) if s.norm2 > 0 else -math.inf)
    return math.inf if m == 0 else -1.0 / m


def ensemble_constants(dist: ClauseDistribution) -> EnsembleConstants:
    """Both constants; ``advisory`` marks distributions failing balance or feasibility."""
    src = ClauseDistribution(dist.k, dist.support) if dist.sign_orbit else dist
    advisory = not (_check_balance(src).passed and _check_feasibility(src).passed)
    om, oh = omega(dist), omega_hat(dist)
    if not advisory and om > oh * (1 + 1e-12) + 1e-12:
        raise AssertionError(f"Omega {om} exceeds Omega-hat {oh} for a balanced feasible ensemble")
    return EnsembleConstants(om, oh, advisory)
