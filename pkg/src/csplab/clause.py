"""Exact Fourier analysis of Boolean clauses on the hypercube {-1,+1}^k.

Assignments are encoded as integers: variable ``i`` (1-based) lives in bit
``i - 1`` and a set bit means ``x_i = +1``.  Index 0 is therefore the
all-minus assignment, and the character ``gamma_Q(x) = prod_{i in Q} x_i``
is indexed by the bitmask of ``Q``.

All norms and inner products use the uniform measure unless a bias
``theta`` is passed explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from . import kernels
from .errors import DomainError, ValidationError

MAX_ARITY = 24

Bias = Union[float, "BiasVector", np.ndarray]


def _check_arity(k):
    if not isinstance(k, (int, np.integer)) or k < 0:
        raise DomainError(f"arity must be a non-negative integer, got {k!r}")
    if k > MAX_ARITY:
        raise DomainError(
            f"arity {k} exceeds the exact-table cap of {MAX_ARITY} (2^{MAX_ARITY} entries)"
        )
    return int(k)


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


_POPCOUNT_CACHE: dict[int, np.ndarray] = {}


def popcounts(k):
    """Read-only vector of ``|Q|`` for every mask ``Q`` in ``[0, 2^k)``."""
    k = _check_arity(k)
    pc = _POPCOUNT_CACHE.get(k)
    if pc is None:
        pc = np.zeros(1, dtype=np.int64)
        for _ in range(k):
            pc = np.concatenate([pc, pc + 1])
        pc = _frozen(pc)
        _POPCOUNT_CACHE[k] = pc
    return pc


def index_to_assignment(bits, k):
    """Return the ``±1`` vector encoded by ``bits``.

    >>> index_to_assignment(5, 3).tolist()
    [1, -1, 1]
    """
    k = _check_arity(k)
    bits = int(bits)
    if not 0 <= bits < (1 << k):
        raise DomainError(f"assignment index {bits} out of range [0, 2^{k})")
    return np.array([1 if (bits >> i) & 1 else -1 for i in range(k)], dtype=np.int64)


def assignment_to_index(x):
    """Inverse of :func:`index_to_assignment`."""
    bits = 0
    for i, xi in enumerate(x):
        if xi == 1:
            bits |= 1 << i
        elif xi != -1:
            raise DomainError(f"assignment entries must be ±1, got {xi!r}")
    return bits


@dataclass(frozen=True, eq=False)
class ClauseTable:
    """A function on ``{-1,+1}^k`` stored as its truth table.

    ``values[j]`` is the value at ``index_to_assignment(j, k)``.  Boolean
    clauses hold 0/1 entries; derivatives and other real tables hold floats.
    """

    k: int
    values: np.ndarray

    def __post_init__(self):
        k = _check_arity(self.k)
        vals = np.asarray(self.values)
        if vals.ndim != 1 or vals.shape[0] != (1 << k):
            raise ValidationError(
                f"truth table for k={k} must have length {1 << k}, got shape {vals.shape}"
            )
        if vals.dtype == np.bool_:
            vals = vals.astype(np.uint8)
        elif not np.issubdtype(vals.dtype, np.number):
            raise ValidationError(f"truth table must be numeric, got dtype {vals.dtype}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def from_function(cls, k, fn):
        """Tabulate ``fn(x)`` where ``x`` is the ``±1`` numpy vector."""
        return cls(k, np.array([fn(index_to_assignment(j, k)) for j in range(1 << k)]))

    @classmethod
    def from_string(cls, k, truth_table):
        """Parse a 0/1 string, character ``j`` being the value at index ``j``."""
        if len(truth_table) != (1 << k):
            raise ValidationError(
                f"truth table string has {len(truth_table)} characters, expected {1 << k}"
            )
        if set(truth_table) - {"0", "1"}:
            raise ValidationError("truth table string may only contain '0' and '1'")
        return cls(k, np.frombuffer(truth_table.encode("ascii"), dtype=np.uint8) - ord("0"))

    @classmethod
    def constant(cls, k, value=1):
        return cls(k, np.full(1 << k, value, dtype=np.uint8 if value in (0, 1) else float))

    @property
    def is_boolean(self):
        return bool(np.all((self.values == 0) | (self.values == 1)))

    def as_float(self):
        return self.values.astype(np.float64)

    def to_string(self):
        if not self.is_boolean:
            raise DomainError("only Boolean tables have a 0/1 string form")
        return (self.values.astype(np.uint8) + ord("0")).tobytes().decode("ascii")

    def key(self):
        """Hashable identity of the table (used to deduplicate supports)."""
        return (self.k, self.values.dtype.str, self.values.tobytes())

    def __eq__(self, other):
        if not isinstance(other, ClauseTable):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.key())

    def __call__(self, x):
        return self.values[assignment_to_index(x)]

    def norm2(self):
        """``||f||^2`` under the uniform measure."""
        v = self.as_float()
        return float(np.mean(v * v))

    def negated_inputs(self):
        """The table of ``x -> f(-x)``."""
        return ClauseTable(self.k, self.values[::-1])

    def permuted(self, perm):
        """The table of ``x -> f(x_{perm[0]}, ..., x_{perm[k-1]})``, 0-based ``perm``."""
        k = self.k
        perm = list(perm)
        if sorted(perm) != list(range(k)):
            raise DomainError(f"{perm!r} is not a permutation of range({k})")
        if k <= 1:
            return self
        # reshape axis a holds bit (k-1-a)
        cube = self.values.reshape((2,) * k)
        axes = [k - 1 - perm[k - 1 - a] for a in range(k)]
        return ClauseTable(k, np.transpose(cube, axes).reshape(-1))

    def flipped(self, mask):
        """The table of ``x -> f(s*x)`` where ``s_i = -1`` exactly on the bits of ``mask``."""
        idx = np.arange(1 << self.k) ^ int(mask)
        return ClauseTable(self.k, self.values[idx])


@dataclass(frozen=True, eq=False)
class FourierSpectrum:
    """Fourier coefficients ``f_Q``; entry ``m`` is the coefficient of the set with mask ``m``."""

    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        k = _check_arity(self.k)
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 1 or c.shape[0] != (1 << k):
            raise ValidationError(f"spectrum for k={k} must have length {1 << k}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "coeffs", _frozen(c))

    def __getitem__(self, subset):
        """Coefficient for a subset given as an iterable of 1-based indices or a mask."""
        if isinstance(subset, (int, np.integer)):
            return float(self.coeffs[int(subset)])
        mask = 0
        for i in subset:
            if not 1 <= i <= self.k:
                raise DomainError(f"variable index {i} outside 1..{self.k}")
            mask |= 1 << (i - 1)
        return float(self.coeffs[mask])

    def level_sums(self, power=1, absolute=False):
        """``sum_{|Q| = d} g(f_Q)`` for each weight ``d = 0..k``."""
        c = np.abs(self.coeffs) if absolute else self.coeffs
        return np.bincount(popcounts(self.k), weights=c**power, minlength=self.k + 1)


@dataclass(frozen=True)
class BiasVector:
    """Per-coordinate biases ``h`` in ``[-1, 1]^k`` for the generalized noise operator."""

    k: int
    h: tuple

    def __post_init__(self):
        h = tuple(float(x) for x in self.h)
        if len(h) != self.k:
            raise DomainError(f"bias vector has {len(h)} entries, expected {self.k}")
        if any(not -1.0 <= x <= 1.0 for x in h):
            raise DomainError(f"bias entries must lie in [-1, 1], got {h}")
        object.__setattr__(self, "h", h)

    @classmethod
    def constant(cls, k, theta):
        return cls(k, (theta,) * k)


@dataclass(frozen=True)
class PartialSets:
    """Partial solution sets of a clause with respect to its first argument.

    Members are ``(k-1)``-bit assignment indices of coordinates ``2..k``
    (coordinate ``j + 2`` lives in bit ``j``).
    """

    s_plus: frozenset
    s_minus: frozenset
    lambda_plus: frozenset
    lambda_minus: frozenset


def fourier_transform(f: ClauseTable) -> FourierSpectrum:
    """Fourier spectrum of ``f`` by an in-place Walsh-Hadamard butterfly.

    The butterflies run on the raw table and the ``2^-k`` normalization is
    applied last, so integer-valued tables transform without rounding.
    """
    a = np.array(f.values, dtype=np.float64)
    kernels.wht(a, f.k)
    return FourierSpectrum(f.k, np.ldexp(a, -f.k))


def inverse_fourier(s: FourierSpectrum) -> ClauseTable:
    """Table of ``f(x) = sum_Q f_Q gamma_Q(x)``."""
    a = np.array(s.coeffs, dtype=np.float64)
    kernels.iwht(a, s.k)
    return ClauseTable(s.k, a)


def _theta(theta):
    theta = float(theta)
    if not -1.0 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [-1, 1], got {theta}")
    return theta


def _product_weights(h):
    # entry m = prod_i ((1 + x_i h_i) / 2) with x decoded from m
    w = np.ones(1)
    for hi in h:
        w = np.concatenate([w * (1.0 - hi) / 2.0, w * (1.0 + hi) / 2.0])
    return w


def theta_measure(k, theta):
    """The product measure ``v_theta`` on ``{-1,+1}^k`` as a length ``2^k`` vector."""
    theta = _theta(theta)
    return _product_weights([theta] * _check_arity(k))


def inner_theta(f: ClauseTable, g: ClauseTable, theta=0.0) -> float:
    """``(f, g)_theta = sum_x f(x) g(x) v_theta(x)``."""
    if f.k != g.k:
        raise DomainError(f"arity mismatch: {f.k} vs {g.k}")
    w = theta_measure(f.k, theta)
    return float(np.sum(f.as_float() * g.as_float() * w))


def _character_values(k, h):
    # entry m = prod_{i in m} h_i
    out = np.ones(1)
    for hi in h:
        out = np.concatenate([out, out * hi])
    return out


def noise_apply(s: FourierSpectrum, h: Bias) -> FourierSpectrum:
    """Apply the noise operator ``T_h``: coefficient ``Q`` is scaled by ``prod_{i in Q} h_i``.

    A scalar ``h`` is the constant bias vector, i.e. the Bonami-Beckner
    operator ``T_theta`` with multiplier ``theta^{|Q|}``.
    """
    if isinstance(h, BiasVector):
        if h.k != s.k:
            raise DomainError(f"bias vector arity {h.k} does not match spectrum arity {s.k}")
        vec = h.h
    elif np.ndim(h) == 0:
        vec = (_theta(h),) * s.k
    else:
        vec = BiasVector(s.k, tuple(h)).h
    return FourierSpectrum(s.k, s.coeffs * _character_values(s.k, vec))


def _check_index(k, i):
    if not isinstance(i, (int, np.integer)) or not 1 <= i <= k:
        raise DomainError(f"variable index {i!r} outside 1..{k}")
    return int(i)


def derivative(f: ClauseTable, i: int) -> ClauseTable:
    """Discrete derivative ``f^(i)(x) = [f(x; x_i=+1) - f(x; x_i=-1)] / 2``.

    The result lives on the remaining ``k - 1`` coordinates, kept in their
    original order.
    """
    i = _check_index(f.k, i)
    v = f.as_float().reshape(-1, 2, 1 << (i - 1))
    return ClauseTable(f.k - 1, (0.5 * (v[:, 1, :] - v[:, 0, :])).reshape(-1))


def influence(f: ClauseTable, i: int) -> float:
    """``I_i(f) = ||f^(i)||^2``."""
    return derivative(f, i).norm2()


def self_correlation(s: FourierSpectrum, theta) -> float:
    """``(f, T_theta f) = sum_Q f_Q^2 theta^{|Q|}``."""
    theta = _theta(theta)
    return float(np.sum(s.coeffs**2 * theta ** popcounts(s.k)))


def partial_sets(f: ClauseTable) -> PartialSets:
    """The sets ``S+``, ``S-`` of tails completing ``f`` with head ``+1``/``-1``, and their differences."""
    if f.k < 2:
        raise DomainError("partial solution sets need k >= 2")
    if not f.is_boolean:
        raise DomainError("partial solution sets are defined for Boolean clauses only")
    v = f.values.reshape(-1, 2)
    s_plus = frozenset(np.flatnonzero(v[:, 1]).tolist())
    s_minus = frozenset(np.flatnonzero(v[:, 0]).tolist())
    return PartialSets(s_plus, s_minus, s_plus - s_minus, s_minus - s_plus)


def read_clause(path) -> ClauseTable:
    """Load a clause from ``{"k": int, "truth_table": "0101..."}``."""
    try:
        data = json.loads(Path(path).read_text())
        return ClauseTable.from_string(int(data["k"]), str(data["truth_table"]))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"malformed clause file {path}: {exc}") from exc


def write_clause(path, f: ClauseTable):
    Path(path).write_text(json.dumps({"k": f.k, "truth_table": f.to_string()}) + "\n")
