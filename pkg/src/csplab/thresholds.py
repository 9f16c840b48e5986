"""Threshold formulas for satisfiability, clustering and reconstruction, with numeric checks.

The functions here evaluate the leading-order closed forms and verify them
numerically: the first/second-moment exponents, the naive-reconstruction
recursion ``z -> 1 - exp(-k alpha z^{k-1} / Omega)`` and its tangency
threshold, and the upper-bound dynamical system used to certify
non-reconstruction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import kernels
from .ensembles import ClauseDistribution, omega, omega_hat
from .errors import ConvergenceError, DomainError

LOG2 = math.log(2.0)
ZERO_GATE = 1e-14


def _check_alpha(alpha):
    alpha = float(alpha)
    if not (alpha >= 0 and math.isfinite(alpha)):
        raise DomainError(f"alpha must be a finite non-negative number, got {alpha}")
    return alpha


def _theta_array(theta, lo=-1.0):
    arr = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < lo) or np.any(arr > 1.0):
        raise DomainError(f"theta must lie in [{lo}, 1], got {theta!r}")
    return arr


def _poly(coeffs, theta):
    """Evaluate ``sum_d coeffs[..., d] theta^d`` for an array ``theta``."""
    theta = np.asarray(theta, dtype=float)
    powers = theta[..., None] ** np.arange(coeffs.shape[-1])
    return powers @ coeffs.T


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def binary_entropy(theta):
    """Entropy of a ``±1`` variable with mean ``theta`` (natural log)."""
    p = (1.0 + np.asarray(theta, dtype=float)) / 2.0
    return -(_xlogx(p) + _xlogx(1.0 - p))


def pair_entropy(theta):
    """``H(theta) = -(1+theta)/2 log(1+theta) - (1-theta)/2 log(1-theta)``."""
    t = np.asarray(theta, dtype=float)
    return -(_xlogx(1.0 + t) + _xlogx(1.0 - t)) / 2.0


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def first_moment_exponent(dist: ClauseDistribution, alpha, theta):
    """Per-variable exponent of the expected number of solutions with magnetization ``theta``.

    Equal to the entropy of the magnetization plus ``alpha E log ||phi||_theta^2``;
    at ``theta = 0`` this is ``log 2 + alpha E log ||phi||^2``.
    """
    alpha = _check_alpha(alpha)
    t = _theta_array(theta)
    out = binary_entropy(t)
    if alpha > 0:
        weights, _ = dist.theta_norm_terms
        norms = dist.theta_norm2(t.ravel())
        with np.errstate(divide="ignore"):
            elog = weights @ np.log(norms)
        out = out + alpha * elog.reshape(t.shape)
    return _scalar(out)


def _self_correlation_ratio_log(dist, t):
    """``E_phi log[(phi, T_theta phi) / ||phi||^4]`` on an array ``t``."""
    sq = np.array([s.sq_level_sums for s in dist.summaries])
    n2 = np.array([s.norm2 for s in dist.summaries])
    corr = _poly(sq, t.ravel())  # (len(t), n_clauses)
    if np.any(corr <= 0):
        raise AssertionError("self-correlation must be positive on [0, 1]")
    vals = np.log(corr / (n2 * n2)) @ dist.weights
    return vals.reshape(t.shape)


def phi(dist: ClauseDistribution, alpha, theta):
    """Second-moment exponent ``H(theta) + alpha E log[(phi, T_theta phi) / ||phi||^4]`` on ``[0, 1]``."""
    alpha = _check_alpha(alpha)
    t = _theta_array(theta, lo=0.0)
    out = pair_entropy(t)
    if alpha > 0:
        out = out + alpha * _self_correlation_ratio_log(dist, t)
    return _scalar(out)


@dataclass(frozen=True)
class PhiSup:
    value: float
    argmax: float
    value_open: float
    argmax_open: float
    delta: float
    grid: int


def _grid_sup(fn, lo, hi, n):
    grid = np.linspace(lo, hi, n)
    vals = fn(grid)
    i = int(np.argmax(vals))
    best, arg = float(vals[i]), float(grid[i])
    # golden-section refinement on the bracketing cell
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n - 1)]
    if b > a:
        res = minimize_scalar(
            lambda x: -float(fn(np.array(x))), bounds=(a, b), method="bounded", options={"xatol": 1e-12}
        )
        if res.success and -res.fun > best:
            best, arg = float(-res.fun), float(res.x)
    return best, arg


def phi_sup(dist: ClauseDistribution, alpha, delta=0.02, grid=10_000) -> PhiSup:
    """Supremum of ``Phi`` over ``[delta, 1]`` and over ``(0, 1]`` by grid plus golden-section refinement."""
    if not 0 < delta <= 1:
        raise DomainError(f"delta must lie in (0, 1], got {delta}")
    alpha = _check_alpha(alpha)

    def fn(t):
        return np.asarray(phi(dist, alpha, t))

    v, a = _grid_sup(fn, delta, 1.0, grid)
    vo, ao = _grid_sup(fn, 1.0 / grid, 1.0, grid)
    return PhiSup(v, a, vo, ao, float(delta), int(grid))


@dataclass(frozen=True)
class SatBounds:
    lower: float
    upper: float
    certificate_alpha: float
    certificate_sup: float
    certified: bool
    delta: float


def sat_bounds(dist: ClauseDistribution, delta=0.02, grid=10_000) -> SatBounds:
    """``(Omega log 2, Omega-hat log 2)`` plus the second-moment grid certificate at ``0.9 * lower``."""
    lower = omega(dist) * LOG2
    upper = omega_hat(dist) * LOG2
    cert_alpha = 0.9 * lower
    if math.isfinite(cert_alpha):
        sup = phi_sup(dist, cert_alpha, delta, grid).value
    else:
        sup = math.nan
    return SatBounds(lower, upper, cert_alpha, sup, bool(sup < 0), float(delta))


@dataclass
class RecursionState:
    alpha: float
    z: list
    converged: bool
    limit: float


def _rate(dist, alpha):
    om = omega(dist)
    return 0.0 if math.isinf(om) else dist.k * alpha / om


def naive_recursion_limit(dist: ClauseDistribution, alpha, tol=1e-12, max_iter=10_000) -> RecursionState:
    """Iterate ``z_l = 1 - exp(-k alpha z_{l-1}^{k-1} / Omega)`` from ``z_0 = 1``.

    Stops when successive iterates differ by less than ``tol``; ``z`` below
    ``1e-14`` is declared 0.  The limit is the largest fixed point in ``[0, 1]``.
    """
    alpha = _check_alpha(alpha)
    if tol <= 0:
        raise DomainError("tol must be positive")
    c = _rate(dist, alpha)
    km1 = dist.k - 1
    z = [1.0]
    for _ in range(int(max_iter)):
        zn = 1.0 - math.exp(-c * math.pow(z[-1], km1))
        if zn < ZERO_GATE:
            z.append(0.0)
            return RecursionState(alpha, z, True, 0.0)
        done = abs(zn - z[-1]) < tol
        z.append(zn)
        if done:
            return RecursionState(alpha, z, True, zn)
    return RecursionState(alpha, z, False, z[-1])


def tangency_u(k):
    """Positive root of ``u = (k-1) log(1+u)``; 0 for ``k = 2`` (no positive root)."""
    if k < 2:
        raise DomainError("k must be at least 2")
    if k == 2:
        return 0.0
    f = lambda u: u - (k - 1) * math.log1p(u)
    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
    lo = hi / 2.0 if hi > 1.0 else 1e-9
    while f(lo) >= 0:
        lo /= 2.0
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def tangency_constant(k):
    """``c* = k alpha* / Omega`` at which ``z = 1 - exp(-c z^{k-1})`` gains a positive fixed point.

    With ``w = c z^{k-1}`` tangency reads ``e^w - 1 = (k-1) w``; writing
    ``u = (k-1) w`` gives ``u = (k-1) log(1+u)`` and ``c = u (1+1/u)^{k-1} / (k-1)``.
    """
    u = tangency_u(k)
    if u == 0.0:
        return 1.0
    return u * (1.0 + 1.0 / u) ** (k - 1) / (k - 1)


def recursion_survives(c, k, max_iter=10**8):
    """Whether ``z = 1 - exp(-c z^{k-1})`` started at 1 stays away from 0.

    Returns True/False, or None when undecided within ``max_iter`` steps.
    For ``k = 2`` the map is concave, so a positive fixed point exists iff its
    slope at 0, which is ``c``, exceeds 1.
    """
    if k == 2:
        return c > 1.0
    r = kernels.recursion_decide(float(c), float(k - 1), int(max_iter))
    return None if r < 0 else bool(r)


@lru_cache(maxsize=None)
def bisect_tree_threshold(k, rel_tol=1e-11, max_iter=10**8):
    """Bisection on ``c`` for the smallest rate whose recursion keeps a positive limit."""
    lo, hi = 0.0, 1.0
    while recursion_survives(hi, k, max_iter) is not True:
        hi *= 2.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        ok = recursion_survives(mid, k, max_iter)
        if ok is None:
            break
        if ok:
            hi = mid
        else:
            lo = mid
    return lo, hi


def tree_threshold_numeric(dist: ClauseDistribution, tol=1e-6):
    """Tangency threshold of the naive recursion, cross-validated by bisection.

    Raises :class:`ConvergenceError` when the closed form and the bisection
    bracket differ by more than ``tol * max(1, alpha)``.
    """
    om = omega(dist)
    if math.isinf(om):
        return math.inf
    k = dist.k
    closed = om * tangency_constant(k) / k
    lo, hi = bisect_tree_threshold(k)
    bis = om * 0.5 * (lo + hi) / k
    if abs(closed - bis) > tol * max(1.0, closed):
        raise ConvergenceError(
            f"tangency {closed!r} and bisection {bis!r} disagree beyond tol={tol}",
            closed_form=closed,
            bisection=bis,
        )
    return closed


def tree_threshold_paper_formula(dist: ClauseDistribution):
    """The printed closed form ``Omega (1 + u (1+1/u)^{k-2}) / (k (k-1))``."""
    k = dist.k
    om = omega(dist)
    u = tangency_u(k)
    inner = 1.0 + u if u == 0.0 else 1.0 + u * (1.0 + 1.0 / u) ** (k - 2)
    return om * inner / (k * (k - 1))


def iter_bound_functions(dist: ClauseDistribution, theta):
    """``(F_k(theta), R_k(theta))`` for the non-reconstruction iteration bounds.

    ``F_k(theta) = 2 E[(phi^(1), T_theta phi^(1)) / ||phi||^2]`` and
    ``R_k(theta) = 2 E[(2 I_1 / ||phi||^2) sum_Q |phi^(1)_Q| theta^max(|Q|,2)]``.
    """
    t = _theta_array(theta, lo=0.0)
    k = dist.k
    sq = np.array([s.deriv_sq_levels / s.norm2 for s in dist.summaries])
    absl = np.array([2.0 * s.influence1 / s.norm2 * s.deriv_abs_levels for s in dist.summaries])
    f = 2.0 * (_poly(sq, t.ravel()) @ dist.weights)
    deg = np.maximum(np.arange(k), 2)
    powers = t.ravel()[:, None] ** deg[None, :]
    r = 2.0 * ((powers @ absl.T) @ dist.weights)
    return _scalar(f.reshape(t.shape)), _scalar(r.reshape(t.shape))


@dataclass
class BoundTrajectory:
    alpha: float
    h_ave: list
    h_hat_ave: list
    certified_nonrecon: bool


def certify_nonreconstruction(
    dist: ClauseDistribution, alpha, ell_max=500, gate=1e-12, confirm=10
) -> BoundTrajectory:
    """Run the upper-bound system on ``<h_l>`` and report whether it collapses.

    ``h_1 = 1 - exp(-k alpha max(1 - 1/Omega, 1/Omega))``, ``h-hat_2 = F(h_1)``, and afterwards
    ``h-hat_{l+1} = F(h_l)/2 + R(sqrt(h_l))/2`` with ``h = 1 - exp(-2 k alpha h-hat)``.
    Certification requires the bound to fall below ``gate`` and keep
    non-increasing for ``confirm`` further steps.
    """
    alpha = _check_alpha(alpha)
    k = dist.k
    om = omega(dist)
    # The exact depth-1 mean is 1 - exp(-k alpha / Omega); the larger exponent keeps
    # h_1 an upper bound both for Omega >= 2 (stated form) and Omega < 2 (e.g. XOR).
    h = 1.0 - math.exp(-k * alpha * max(1.0 - 1.0 / om, 1.0 / om))
    hs, hhats = [h], [math.nan]
    below_at = 0 if h < gate else None
    for ell in range(2, ell_max + 1):
        if ell == 2:
            hh = float(iter_bound_functions(dist, h)[0])
        else:
            f, _ = iter_bound_functions(dist, h)
            _, r = iter_bound_functions(dist, math.sqrt(h))
            hh = 0.5 * float(f) + 0.5 * float(r)
        hn = 1.0 - math.exp(-2.0 * k * alpha * hh)
        hn = min(max(hn, 0.0), 1.0)
        hhats.append(min(max(hh, 0.0), 1.0))
        if below_at is not None and hn > h:
            return BoundTrajectory(alpha, hs + [hn], hhats, False)
        hs.append(hn)
        h = hn
        if below_at is None and h < gate:
            below_at = len(hs) - 1
        if below_at is not None and len(hs) - 1 - below_at >= confirm:
            return BoundTrajectory(alpha, hs, hhats, True)
    return BoundTrajectory(alpha, hs, hhats, False)


def first_step_mean(dist: ClauseDistribution, alpha):
    """Exact ``E h(x_1^+)`` on a depth-1 tree: ``1 - exp(-k alpha / Omega)``.

    Each root clause freezes the root with probability ``|Lambda+|/|S+| = 1/Omega``
    independently, and the number of clauses is Poisson(``k alpha``).
    """
    alpha = _check_alpha(alpha)
    return 1.0 - math.exp(-dist.k * alpha / omega(dist))


def first_step_mean_stated(dist: ClauseDistribution, alpha):
    """The stated closed form ``1 - exp(-k alpha (1 - 1/Omega))`` (kept for comparison)."""
    alpha = _check_alpha(alpha)
    return 1.0 - math.exp(-dist.k * alpha * (1.0 - 1.0 / omega(dist)))


def coloring_thresholds(q):
    """Leading-order ``(alpha_s, alpha_d, alpha_r)`` for random graph ``q``-coloring."""
    if not isinstance(q, (int, np.integer)) or q < 3:
        raise DomainError(f"q must be an integer >= 3, got {q!r}")
    lq = math.log(q)
    return q * lq, 0.5 * q * lq, 0.5 * q * (lq + math.log(lq))


@dataclass
class ThresholdReport:
    alpha_sat_lower: float
    alpha_sat_upper: float
    alpha_cluster_leading: float
    alpha_recon_leading: float
    alpha_tree_numeric: float
    alpha_tree_paper_formula: float
    notes: list = field(default_factory=list)


def threshold_report(dist: ClauseDistribution, tol=1e-6) -> ThresholdReport:
    om, oh, k = omega(dist), omega_hat(dist), dist.k
    leading = om / k * math.log(k)
    notes = ["o(.)/O(1) terms dropped from every leading-order formula"]
    try:
        numeric = tree_threshold_numeric(dist, tol)
    except ConvergenceError as exc:
        numeric = exc.values["closed_form"]
        notes.append(str(exc))
    printed = tree_threshold_paper_formula(dist)
    if math.isfinite(numeric) and abs(printed - numeric) > tol * max(1.0, numeric):
        notes.append(
            "printed closed form differs from the recursion's tangency threshold at finite k; "
            "the tangency value is operative"
        )
    return ThresholdReport(om * LOG2, oh * LOG2, leading, leading, numeric, printed, notes)
