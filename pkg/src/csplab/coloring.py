"""Entropy/energy functionals of color types and their constrained optimization.

For a ``q x q`` joint type ``v`` with row sums ``r`` and column sums ``c``::

    H(v) = -sum v log v,    E(v) = log(1 - |r|^2 - |c|^2 + |v|^2),

and for a color-frequency vector ``w``: ``H(w) = -sum w log w``,
``E(w) = log(1 - |w|^2)``.  ``v-bar`` and ``w-bar`` are the uniform types.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, ValidationError

SIMPLEX_TOL = 1e-12
ENERGY_FLOOR = 1e-300
OPT_TOL = 1e-7


@dataclass(frozen=True)
class Functionals:
    entropy: float
    energy: float

    def value(self, alpha):
        """``H + alpha E`` with ``alpha * (-inf) = -inf`` for ``alpha > 0``."""
        if alpha == 0:
            return self.entropy
        return self.entropy + alpha * self.energy


def _as_type(x):
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or (x.ndim == 2 and x.shape[0] != x.shape[1]):
        raise ValidationError(f"expected a q-vector or a q x q matrix, got shape {x.shape}")
    if np.any(x < -SIMPLEX_TOL) or abs(x.sum() - 1.0) > SIMPLEX_TOL * max(1, x.size):
        raise ValidationError("type must be non-negative and sum to 1")
    return np.clip(x, 0.0, None)


def uniform_type(q, matrix=True):
    return np.full((q, q) if matrix else q, 1.0 / (q * q if matrix else q))


def entropy(x):
    x = np.asarray(x, dtype=float)
    pos = x[x > 0]
    return float(-np.sum(pos * np.log(pos)))


def energy_argument(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return 1.0 - float(np.sum(x * x))
    r, c = x.sum(axis=1), x.sum(axis=0)
    return 1.0 - float(r @ r) - float(c @ c) + float(np.sum(x * x))


def energy(x):
    a = energy_argument(x)
    return math.log(a) if a > ENERGY_FLOOR else -math.inf


def functionals(x) -> Functionals:
    """Entropy and energy of a type vector or matrix (``E = -inf`` when the log argument is <= 1e-300)."""
    x = _as_type(x)
    return Functionals(entropy(x), energy(x))


def reference_value(q, alpha, matrix=True):
    """``H + alpha E`` at the uniform type: ``2 log q + 2 alpha log(1 - 1/q)`` for matrices."""
    if matrix:
        return 2.0 * math.log(q) + 2.0 * alpha * math.log(1.0 - 1.0 / q)
    return math.log(q) + alpha * math.log(1.0 - 1.0 / q)


@dataclass(frozen=True)
class Membership:
    member: bool
    rows_ok: bool | None
    cols_ok: bool | None
    spread_ok: bool
    rows_dist2: float | None
    cols_dist2: float | None
    dist2: float


def membership(x, delta=0.0, epsilon=0.0) -> Membership:
    """Membership in ``B_{q x q}^{delta, epsilon}`` (matrices) or ``B_q^epsilon`` (vectors).

    Matrices: ``|(v - v-bar) 1|^2 <= delta``, ``|1^t (v - v-bar)|^2 <= delta`` and
    ``|v - v-bar|^2 >= epsilon``.  Vectors: ``|w - w-bar|^2 > epsilon``.
    """
    if delta < 0 or epsilon < 0:
        raise DomainError("delta and epsilon must be non-negative")
    x = _as_type(x)
    q = x.shape[0]
    if x.ndim == 1:
        d2 = float(np.sum((x - 1.0 / q) ** 2))
        ok = d2 > epsilon
        return Membership(ok, None, None, ok, None, None, d2)
    d = x - 1.0 / q**2
    rows = float(np.sum(d.sum(axis=1) ** 2))
    cols = float(np.sum(d.sum(axis=0) ** 2))
    d2 = float(np.sum(d * d))
    r_ok, c_ok, s_ok = rows <= delta, cols <= delta, d2 >= epsilon
    return Membership(r_ok and c_ok and s_ok, r_ok, c_ok, s_ok, rows, cols, d2)


def sinkhorn(v, q, iters=10_000, tol=1e-15):
    """Scale a positive matrix to row and column sums ``1/q``."""
    v = np.array(v, dtype=float)
    target = 1.0 / q
    for _ in range(iters):
        v *= target / v.sum(axis=1, keepdims=True)
        cs = v.sum(axis=0)
        v *= target / cs
        if np.max(np.abs(v.sum(axis=1) - target)) < tol:
            break
    return v


def _birkhoff_value(v, alpha):
    return entropy(v) + alpha * energy(v) if alpha else entropy(v)


def _mirror_ascent(v, q, alpha, step, max_iter, tol, record=None):
    for it in range(max_iter):
        a = energy_argument(v)
        logv = np.log(v)
        # log v + step * (-log v - 1 + alpha grad E), constants dropped
        z = (1.0 - step) * logv + step * alpha * 2.0 * v / a
        z -= z.max()
        nv = sinkhorn(np.exp(z), q)
        nv = np.maximum(nv, 1e-300)
        change = float(np.max(np.abs(nv - v)))
        v = nv
        if record is not None:
            record(it, _birkhoff_value(v, alpha))
        if change < tol:
            return v, _birkhoff_value(v, alpha), True, it + 1
    return v, _birkhoff_value(v, alpha), False, max_iter


@dataclass
class BirkhoffResult:
    value: float
    argmax: np.ndarray
    converged: bool
    reference: float
    restart_values: list


def _starts(q, n_restarts, rng):
    vbar = uniform_type(q)
    starts = [vbar.copy()]
    eye = np.eye(q) / q
    for s in (0.05, 0.2, 0.5, 0.8):
        starts.append((1 - s) * eye + s * vbar)
    while len(starts) < n_restarts:
        starts.append(sinkhorn(rng.dirichlet(np.ones(q * q)).reshape(q, q) + 1e-6, q))
    return starts[:max(n_restarts, 1)]


def _best(results):
    best = max(r[1] for r in results)
    tied = [r for r in results if r[1] >= best - 1e-12]
    return min(tied, key=lambda r: tuple(np.round(r[0].ravel(), 12)))


def birkhoff_sup(
    q, alpha, n_restarts=64, seed=0, step=0.5, max_iter=20_000, tol=1e-14, trace=None
) -> BirkhoffResult:
    """Maximize ``H(v) + alpha E(v)`` over types with uniform marginals (``q v`` doubly stochastic).

    Entropic mirror ascent followed by Sinkhorn projection, multistarted from
    ``v-bar``, smoothed permutation matrices and Dirichlet draws.  Ties in
    value (within 1e-12) are broken by the lexicographically smallest argmax.

    Parameters
    ----------
    trace : list, optional
        When given, ``(restart, iter, value)`` rows are appended to it.
    """
    if not isinstance(q, (int, np.integer)) or q < 3:
        raise DomainError(f"q must be an integer >= 3, got {q!r}")
    if not (alpha >= 0 and math.isfinite(alpha)):
        raise DomainError("alpha must be finite and non-negative")
    rng = np.random.default_rng(seed)
    results = []
    converged = True
    for i, v0 in enumerate(_starts(q, n_restarts, rng)):
        record = None if trace is None else (lambda it, val, i=i: trace.append((i, it, val)))
        v, val, ok, _ = _mirror_ascent(np.maximum(v0, 1e-300), q, alpha, step, max_iter, tol, record)
        converged &= ok
        results.append((v, val))
    v, val = _best(results)
    ref = reference_value(q, alpha)
    if alpha <= (q - 1) * math.log(q - 1):
        if val > ref + 1e-6:
            raise AssertionError(f"Birkhoff supremum {val} exceeds the uniform value {ref}")
    return BirkhoffResult(val, v, converged, ref, [r[1] for r in results])


def write_trace(path, trace):
    """Write optimization trace rows ``(restart, iter, value)`` as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["restart", "iter", "value"])
        for r, it, val in trace:
            w.writerow([r, it, repr(float(val))])


# --- constrained supremum over B_{q x q}^{delta, epsilon} -------------------------------


def _value_and_grad(x, q, c):
    v = x.reshape(q, q)
    r, col = v.sum(axis=1), v.sum(axis=0)
    a = 1.0 - r @ r - col @ col + np.sum(v * v)
    vv = np.maximum(v, 1e-300)
    h = -np.sum(vv * np.log(vv))
    gh = -np.log(vv) - 1.0
    if a <= ENERGY_FLOOR:
        return -1e10, np.zeros(q * q)
    e = math.log(a)
    ge = (-2.0 * r[:, None] - 2.0 * col[None, :] + 2.0 * v) / a
    return h + c * e, (gh + c * ge).ravel()


def _constraints(q, delta, epsilon):
    vb = 1.0 / q**2
    cons = [
        {"type": "eq", "fun": lambda x: np.sum(x) - 1.0, "jac": lambda x: np.ones_like(x)},
        {
            "type": "ineq",
            "fun": lambda x: np.sum((x - vb) ** 2) - epsilon,
            "jac": lambda x: 2.0 * (x - vb),
        },
    ]
    if delta == 0:
        # uniform marginals; one row constraint is implied by the rest
        for i in range(q):
            mask = np.zeros((q, q))
            mask[i, :] = 1.0
            cons.append({"type": "eq", "fun": lambda x, m=mask.ravel(): m @ x - 1.0 / q, "jac": lambda x, m=mask.ravel(): m})
        for j in range(q - 1):
            mask = np.zeros((q, q))
            mask[:, j] = 1.0
            cons.append({"type": "eq", "fun": lambda x, m=mask.ravel(): m @ x - 1.0 / q, "jac": lambda x, m=mask.ravel(): m})
    else:
        def rows(x):
            d = x.reshape(q, q).sum(axis=1) - 1.0 / q
            return delta - d @ d

        def rows_jac(x):
            d = x.reshape(q, q).sum(axis=1) - 1.0 / q
            return np.repeat(-2.0 * d, q)

        def cols(x):
            d = x.reshape(q, q).sum(axis=0) - 1.0 / q
            return delta - d @ d

        def cols_jac(x):
            d = x.reshape(q, q).sum(axis=0) - 1.0 / q
            return np.tile(-2.0 * d, q)

        cons += [
            {"type": "ineq", "fun": rows, "jac": rows_jac},
            {"type": "ineq", "fun": cols, "jac": cols_jac},
        ]
    return cons


def _feasible_starts(q, epsilon, n_restarts, rng):
    vbar = uniform_type(q)
    starts = []
    eye = np.eye(q) / q
    full = float(np.sum((eye - vbar) ** 2))
    # smoothed permutations hitting the spread constraint at several levels
    for level in (1.0, 1.05, 1.5, 2.5):
        s = min(1.0, math.sqrt(level * epsilon / full)) if full > 0 else 1.0
        starts.append((1 - s) * vbar + s * eye)
    starts.append(eye.copy())
    while len(starts) < n_restarts:
        p = sinkhorn(rng.dirichlet(np.full(q * q, 0.5)).reshape(q, q) + 1e-9, q)
        d = p - vbar
        nd = float(np.sum(d * d))
        if nd > 0:
            t = math.sqrt(epsilon * rng.uniform(1.0, 2.0) / nd)
            if t <= 1.0:
                p = vbar + t * d
        starts.append(p)
    return starts[:n_restarts]


@dataclass
class ConstrainedSup:
    value: float
    argmax: np.ndarray | None
    gap: float  # value - reference


def constrained_sup(q, c, delta, epsilon, n_restarts=32, seed=0, extra_starts=()) -> ConstrainedSup:
    """``sup_{v in B^{delta,epsilon}} H(v) + c E(v)`` by multistart SLSQP."""
    rng = np.random.default_rng(seed)
    cons = _constraints(q, delta, epsilon)
    bounds = [(0.0, 1.0)] * (q * q)
    best_val, best_x = -math.inf, None
    for v0 in list(extra_starts) + _feasible_starts(q, epsilon, n_restarts, rng):
        x0 = np.clip(np.asarray(v0, dtype=float).ravel(), 1e-12, 1.0)
        res = minimize(
            lambda x: tuple(-t for t in _value_and_grad(x, q, c)),
            x0,
            jac=True,
            method="SLSQP",
            bounds=bounds,
            constraints=cons,
            options={"maxiter": 500, "ftol": 1e-13},
        )
        x = np.clip(res.x, 0.0, None)
        x /= x.sum()
        m = membership(x.reshape(q, q), delta + 1e-10, max(epsilon - 1e-10, 0.0))
        if not m.member:
            continue
        val = entropy(x) + c * energy(x.reshape(q, q))
        if val > best_val:
            best_val, best_x = val, x.reshape(q, q)
    if best_x is None:
        return ConstrainedSup(-math.inf, None, -math.inf)
    return ConstrainedSup(best_val, best_x, best_val - reference_value(q, c))


def _check_b_nonempty(q, delta, epsilon):
    eye = np.eye(q) / q
    if float(np.sum((eye - uniform_type(q)) ** 2)) < epsilon:
        # permutation types maximize the spread among uniform-marginal types
        corner = np.zeros((q, q))
        corner[0, 0] = 1.0
        if float(np.sum((corner - uniform_type(q)) ** 2)) < epsilon:
            raise DomainError(f"B^{{delta,epsilon}} is empty for epsilon = {epsilon}")


@dataclass
class KappaResult:
    kappa: float
    bracket: tuple
    witness: np.ndarray | None


def kappa(q, delta, epsilon, tol=1e-4, n_restarts=32, seed=0) -> KappaResult:
    """Largest ``c`` with ``sup_B [H + c E] <= H(v-bar) + c E(v-bar)``, by bisection on ``[0, 4 q log q]``.

    Feasibility is declared when the constrained supremum exceeds the
    uniform value by at most ``1e-7``.
    """
    if delta < 0 or epsilon <= 0:
        raise DomainError("need delta >= 0 and epsilon > 0")
    _check_b_nonempty(q, delta, epsilon)
    lo, hi = 0.0, 4.0 * q * math.log(q)
    witness = None
    warm = []

    def feasible(c):
        nonlocal witness
        res = constrained_sup(q, c, delta, epsilon, n_restarts, seed, warm)
        if res.argmax is not None:
            warm[:] = [res.argmax]
        if res.gap > OPT_TOL:
            witness = res.argmax
            return False
        return True

    if not feasible(lo):
        return KappaResult(0.0, (0.0, 0.0), witness)
    if feasible(hi):
        return KappaResult(hi, (hi, hi), None)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return KappaResult(lo, (lo, hi), witness)


def local_delta(q, alpha, epsilon, delta0=None, min_delta=1e-8, n_restarts=32, seed=0):
    """Halve ``delta`` until ``alpha`` is feasible for ``B^{delta,epsilon}``, i.e. ``kappa >= alpha``.

    Returns the first such ``delta`` or ``None`` when ``min_delta`` is reached.
    """
    delta = epsilon / 4.0 if delta0 is None else delta0
    while delta >= min_delta:
        res = constrained_sup(q, alpha, delta, epsilon, n_restarts, seed)
        if res.gap <= OPT_TOL:
            return delta
        delta /= 2.0
    return None


def gap_bounds(x, alpha, epsilon, kappa_val=None, delta=None):
    """Slack of the separation inequalities (non-negative when the inequality holds).

    Vectors ``w`` in ``B_q^epsilon``:
    ``[H(w-bar) + alpha E(w-bar)] - [H(w) + alpha E(w)] - alpha epsilon / (2 (1 - 1/q))``.

    Matrices ``v`` in ``B^{delta,epsilon}`` with ``epsilon > 2 delta`` and ``alpha < kappa``:
    ``[H(v-bar) + alpha E(v-bar)] - [H(v) + alpha E(v)] - (kappa - alpha)(epsilon - 2 delta) / (2 (1 - 1/q)^2)``.
    """
    x = _as_type(x)
    q = x.shape[0]
    f = functionals(x)
    if x.ndim == 1:
        if not membership(x, 0.0, epsilon).spread_ok and not math.isclose(
            membership(x).dist2, epsilon, rel_tol=1e-9, abs_tol=1e-15
        ):
            raise DomainError("w must satisfy |w - w-bar|^2 >= epsilon")
        cur = f.value(alpha)
        if cur == -math.inf:
            return math.inf
        return reference_value(q, alpha, matrix=False) - cur - alpha * epsilon / (2.0 * (1.0 - 1.0 / q))
    if kappa_val is None or delta is None:
        raise DomainError("matrix gap bound needs kappa_val and delta")
    if not epsilon > 2 * delta:
        raise DomainError("need epsilon > 2 delta")
    if not alpha < kappa_val:
        raise DomainError("need alpha < kappa")
    if not membership(x, delta + 1e-12, max(epsilon - 1e-12, 0.0)).member:
        raise DomainError("v is not in B^{delta,epsilon}")
    cur = f.value(alpha)
    if cur == -math.inf:
        return math.inf
    margin = (kappa_val - alpha) * (epsilon - 2 * delta) / (2.0 * (1.0 - 1.0 / q) ** 2)
    return reference_value(q, alpha) - cur - margin
