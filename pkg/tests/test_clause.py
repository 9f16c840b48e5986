import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csplab.clause import (
    BiasVector,
    ClauseTable,
    FourierSpectrum,
    assignment_to_index,
    derivative,
    fourier_transform,
    index_to_assignment,
    influence,
    inner_theta,
    inverse_fourier,
    noise_apply,
    partial_sets,
    read_clause,
    self_correlation,
    write_clause,
)
from csplab.ensembles import builtin
from csplab.errors import DomainError, ValidationError

from oracles import brute_fourier, brute_inner_theta


def two_col(k):
    return builtin("hyp2col", k).clauses[0]


def xor2():
    return ClauseTable.from_function(2, lambda x: int(x[0] * x[1] == 1))


@st.composite
def tables(draw, kmin=1, kmax=8):
    k = draw(st.integers(kmin, kmax))
    bits = draw(st.lists(st.integers(0, 1), min_size=1 << k, max_size=1 << k))
    return ClauseTable(k, np.array(bits, dtype=np.uint8))


def test_index_to_assignment_examples():
    assert tuple(index_to_assignment(0, 3)) == (-1, -1, -1)
    assert tuple(index_to_assignment(7, 3)) == (1, 1, 1)
    assert tuple(index_to_assignment(5, 3)) == (1, -1, 1)
    with pytest.raises((DomainError, ValueError)):
        index_to_assignment(8, 3)


@given(st.integers(1, 16).flatmap(lambda k: st.tuples(st.just(k), st.integers(0, (1 << k) - 1))))
def test_assignment_roundtrip(kb):
    k, bits = kb
    assert assignment_to_index(index_to_assignment(bits, k)) == bits


def test_table_validation():
    with pytest.raises(ValidationError):
        ClauseTable(3, np.zeros(7))
    with pytest.raises(ValidationError):
        ClauseTable.from_string(2, "01x1")
    with pytest.raises((DomainError, ValidationError)):
        ClauseTable(25, np.zeros(2))


def test_fourier_examples():
    s = fourier_transform(ClauseTable.constant(3))
    assert s.coeffs[0] == 1.0 and not np.any(s.coeffs[1:])
    s = fourier_transform(xor2())
    assert s[()] == 0.5 and s[(1, 2)] == 0.5 and s[(1,)] == 0 and s[(2,)] == 0
    s = fourier_transform(two_col(3))
    assert s[()] == 0.75
    for q in [(1, 2), (1, 3), (2, 3)]:
        assert s[q] == -0.25
    for q in [(1,), (2,), (3,), (1, 2, 3)]:
        assert s[q] == 0.0


def test_fourier_matches_brute_force():
    rng = np.random.default_rng(1)
    for k in range(1, 7):
        vals = rng.integers(0, 2, size=1 << k)
        np.testing.assert_allclose(fourier_transform(ClauseTable(k, vals)).coeffs, brute_fourier(vals, k), atol=1e-13)


def test_inverse_examples():
    one = inverse_fourier(FourierSpectrum(3, np.eye(8)[0]))
    np.testing.assert_array_equal(one.values, np.ones(8))
    x1 = inverse_fourier(FourierSpectrum(3, np.eye(8)[1]))
    np.testing.assert_array_equal(x1.values, [index_to_assignment(j, 3)[0] for j in range(8)])
    back = inverse_fourier(fourier_transform(two_col(3)))
    np.testing.assert_allclose(back.values, two_col(3).values, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(tables())
def test_parseval_and_roundtrip(f):
    s = fourier_transform(f)
    assert abs(np.sum(s.coeffs**2) - f.norm2()) < 1e-12
    np.testing.assert_allclose(inverse_fourier(s).values, f.values, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(tables(kmin=2), st.data())
def test_derivative_shift(f, data):
    i = data.draw(st.integers(1, f.k))
    s, d = fourier_transform(f), fourier_transform(derivative(f, i))
    for mask in range(1 << (f.k - 1)):
        lo = mask & ((1 << (i - 1)) - 1)
        hi = (mask >> (i - 1)) << i
        assert abs(d.coeffs[mask] - s.coeffs[lo | hi | (1 << (i - 1))]) < 1e-12


@settings(max_examples=100, deadline=None)
@given(tables(), st.floats(-1, 1), st.floats(-1, 1))
def test_noise_semigroup(f, t1, t2):
    s = fourier_transform(f)
    a = noise_apply(noise_apply(s, t1), t2).coeffs
    b = noise_apply(s, t1 * t2).coeffs
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_noise_examples():
    s = fourier_transform(two_col(4))
    np.testing.assert_array_equal(noise_apply(s, 1.0).coeffs, s.coeffs)
    z = noise_apply(s, 0.0).coeffs
    assert z[0] == s.coeffs[0] and not np.any(z[1:])
    flip = noise_apply(s, BiasVector(4, (1, 1, 1, -1))).coeffs
    for m in range(16):
        assert flip[m] == (-s.coeffs[m] if m & 8 else s.coeffs[m])
    with pytest.raises(DomainError):
        noise_apply(s, BiasVector(4, (1, 1, 1, 1.5)))


def test_inner_theta():
    one = ClauseTable.constant(3)
    for t in (-1, -0.3, 0, 0.7, 1):
        assert inner_theta(one, one, t) == pytest.approx(1.0, abs=1e-15)
    phi = two_col(5)
    for t in np.linspace(-1, 1, 11):
        expect = 1 - ((1 + t) / 2) ** 5 - ((1 - t) / 2) ** 5
        assert inner_theta(phi, phi, t) == pytest.approx(expect, abs=1e-13)
        assert inner_theta(phi, phi, t) == pytest.approx(brute_inner_theta(phi.values, phi.values, t, 5), abs=1e-13)
    assert inner_theta(two_col(3), two_col(3), 1.0) == 0.0
    with pytest.raises(DomainError):
        inner_theta(one, one, 1.5)


def test_derivative_and_influence_examples():
    assert not np.any(derivative(ClauseTable.constant(3), 2).values)
    d = derivative(xor2(), 1)
    np.testing.assert_array_equal(d.values, [-0.5, 0.5])
    assert influence(two_col(3), 1) == pytest.approx(0.125)
    assert influence(ClauseTable.constant(4), 3) == 0
    with pytest.raises(DomainError):
        derivative(two_col(3), 4)


@pytest.mark.parametrize("name,k", [("hyp2col", 3), ("hyp2col", 6), ("nae", 4), ("xor", 4)])
def test_balanced_clause_identities(name, k):
    for phi in builtin(name, k).explicit().clauses[:8]:
        s = fourier_transform(phi)
        odd = s.coeffs[np.array([bin(m).count("1") % 2 == 1 for m in range(1 << k)])]
        assert np.max(np.abs(odd)) < 1e-14
        for i in range(1, k + 1):
            assert influence(phi, i) == pytest.approx((1 - phi.norm2()) / 2, abs=1e-14)
        ps = partial_sets(phi)
        assert len(ps.s_plus) == len(ps.s_minus) == round((1 << (k - 1)) * phi.norm2())
        assert len(ps.lambda_plus) == len(ps.lambda_minus) == round((1 << k) * influence(phi, 1))


def test_self_correlation():
    s = fourier_transform(two_col(5))
    assert self_correlation(s, 1.0) == pytest.approx(two_col(5).norm2(), abs=1e-14)
    assert self_correlation(s, 0.0) == pytest.approx(s.coeffs[0] ** 2, abs=1e-15)
    sx = fourier_transform(builtin("xor", 4).clauses[0])
    for t in np.linspace(0, 1, 11):
        assert self_correlation(sx, t) == pytest.approx(0.25 + 0.25 * t**4, abs=1e-14)
    grid = [self_correlation(s, t) for t in np.linspace(0, 1, 101)]
    assert all(b >= a - 1e-15 for a, b in zip(grid, grid[1:]))


def test_partial_sets_examples():
    ps = partial_sets(two_col(3))
    assert len(ps.s_plus) == 3 and len(ps.lambda_plus) == 1
    ps = partial_sets(xor2())
    assert ps.s_plus == ps.lambda_plus == frozenset({1})
    assert ps.s_minus == ps.lambda_minus == frozenset({0})
    ps = partial_sets(ClauseTable.constant(3))
    assert not ps.lambda_plus and not ps.lambda_minus
    with pytest.raises(DomainError):
        partial_sets(derivative(two_col(3), 1))


def test_clause_file_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    write_clause(path, two_col(4))
    assert read_clause(path) == two_col(4)
    path.write_text('{"k": 2}')
    with pytest.raises(ValidationError):
        read_clause(path)


def test_permutation_and_flip_are_consistent():
    phi = ClauseTable(3, np.array([0, 1, 1, 0, 1, 0, 0, 1], dtype=np.uint8))
    g = phi.permuted([1, 2, 0])
    for j in range(8):
        x = index_to_assignment(j, 3)
        assert g(x) == phi(np.array([x[1], x[2], x[0]]))
    assert phi.flipped(0b111) == phi.negated_inputs()
    assert math.isclose(phi.flipped(0b101).norm2(), phi.norm2())
