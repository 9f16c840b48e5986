import math

import numpy as np
import pytest

from csplab.ensembles import builtin, check_conditions, omega, omega_hat
from csplab.errors import DomainError
from csplab import thresholds as T

from oracles import bisect_rate, tangency_root

LOG2 = math.log(2)
BUILTINS = [(n, k) for n in ("hyp2col", "nae", "xor") for k in range(2, 11) if not (n == "xor" and k % 2)]


def test_first_moment_exponent_examples():
    h3 = builtin("hyp2col", 3)
    assert T.first_moment_exponent(h3, 0.0, 0.0) == pytest.approx(LOG2)
    assert T.first_moment_exponent(h3, omega_hat(h3) * LOG2, 0.0) == pytest.approx(0.0, abs=1e-14)
    assert T.first_moment_exponent(builtin("xor", 4), 1.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DomainError):
        T.first_moment_exponent(h3, -1.0, 0.0)
    with pytest.raises(DomainError):
        T.first_moment_exponent(h3, 1.0, 1.5)


def test_phi_examples():
    h3 = builtin("hyp2col", 3)
    assert float(T.phi(h3, 1.0, 1.0)) == pytest.approx(-LOG2 - math.log(0.75), abs=1e-12)
    assert float(T.phi(h3, 1.0, 0.5)) == pytest.approx(-0.050769, abs=1e-6)
    # direct two-term formula at theta = 0.5
    h = -0.75 * math.log(1.5) - 0.25 * math.log(0.5)
    corr = 0.75**2 + 3 * 0.0625 * 0.25
    assert float(T.phi(h3, 1.0, 0.5)) == pytest.approx(h + math.log(corr / 0.5625), abs=1e-14)


@pytest.mark.parametrize("name,k", BUILTINS)
@pytest.mark.parametrize("alpha", [0.1, 1.0, 10.0])
def test_phi_zero_at_origin(name, k, alpha):
    assert float(T.phi(builtin(name, k), alpha, 0.0)) == 0.0


def test_phi_sup_examples():
    s = T.phi_sup(builtin("hyp2col", 5), 0.9 * 15 * LOG2)
    assert s.value < 0
    s0 = T.phi_sup(builtin("hyp2col", 3), 0.0)
    assert s0.value == pytest.approx(float(T.pair_entropy(0.02)), abs=1e-12)
    assert T.phi_sup(builtin("hyp2col", 3), 10.0, delta=0.5).value > 0


def test_phi_sup_grid_stability():
    for k in (4, 6, 8):
        d = builtin("hyp2col", k)
        a = 0.9 * omega(d) * LOG2
        assert abs(T.phi_sup(d, a, grid=10_000).value - T.phi_sup(d, a, grid=20_000).value) < 1e-8


def test_sat_bounds():
    b = T.sat_bounds(builtin("hyp2col", 3))
    assert (b.lower, b.upper) == pytest.approx((2.079442, 2.409421), abs=1e-6)
    bx = T.sat_bounds(builtin("xor", 4))
    assert bx.lower == pytest.approx(LOG2) and bx.upper == pytest.approx(1.0, abs=1e-15)
    for k in range(5, 9):
        assert T.sat_bounds(builtin("hyp2col", k)).certified
    # the large-k certificate does not hold yet at k = 4 (sup ~ +0.0068 at theta ~ 0.574)
    b4 = T.sat_bounds(builtin("hyp2col", 4))
    assert not b4.certified and b4.certificate_sup == pytest.approx(0.0067607, abs=1e-6)
    assert T.phi_sup(builtin("hyp2col", 4), 0.84 * 7 * LOG2).value < 0


def test_naive_recursion_examples():
    x4 = builtin("xor", 4)
    assert T.naive_recursion_limit(x4, 0.5).limit == 0.0
    assert T.naive_recursion_limit(x4, 0.0).z[1] == 0.0
    r = T.naive_recursion_limit(x4, 0.9)
    assert r.converged and r.limit > 0
    assert r.limit == pytest.approx(1 - math.exp(-3.6 * r.limit**3), abs=1e-11)
    lims = [T.naive_recursion_limit(x4, a).limit for a in np.linspace(0.5, 1.5, 21)]
    assert all(b >= a for a, b in zip(lims, lims[1:]))
    bad = T.naive_recursion_limit(x4, 0.9, max_iter=3)
    assert not bad.converged and len(bad.z) == 4


def test_tangency_against_newton_oracle():
    for k in range(3, 30):
        assert T.tangency_u(k) == pytest.approx(tangency_root(k), rel=1e-12)
    assert T.tree_threshold_numeric(builtin("xor", 4)) == pytest.approx(0.7723, abs=1e-3)
    assert T.tree_threshold_numeric(builtin("hyp2col", 3)) == pytest.approx(2.4554, abs=1e-3)
    c = bisect_rate(3)
    assert T.tree_threshold_numeric(builtin("xor", 4)) == pytest.approx(c / 4, abs=1e-6)


@pytest.mark.parametrize("name,k", BUILTINS)
def test_tree_threshold_agreement(name, k):
    d = builtin(name, k)
    num = T.tree_threshold_numeric(d)
    assert abs(num - omega(d) * T.tangency_constant(k) / k) <= 1e-6 * max(1, num)


def test_tree_threshold_ratio_trend():
    ratios = [T.tangency_constant(k) / math.log(k) for k in (10, 20, 50, 100)]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert 1 < ratios[-1] < 2.2
    assert T.tangency_constant(1000) / math.log(1000) < ratios[-1]


def test_paper_formula_values():
    assert T.tree_threshold_paper_formula(builtin("xor", 4)) == pytest.approx(0.7406, abs=1e-4)
    assert T.tree_threshold_paper_formula(builtin("hyp2col", 3)) == pytest.approx(2.2565, abs=1e-4)


def test_iter_bound_functions():
    for name, k in [("hyp2col", 3), ("hyp2col", 6), ("nae", 4), ("xor", 4), ("xor", 6)]:
        d = builtin(name, k)
        f1, _ = T.iter_bound_functions(d, 1.0)
        f0, _ = T.iter_bound_functions(d, 0.0)
        assert float(f1) == pytest.approx(1 / omega(d), abs=1e-13)
        assert float(f0) == pytest.approx(0.0, abs=1e-15)
    x = builtin("xor", 6)
    for t in np.linspace(0, 1, 11):
        assert float(T.iter_bound_functions(x, t)[1]) == pytest.approx(t**5, abs=1e-14)


def test_f_bound_by_decay_constant():
    # C is estimated from ||T_t phi^(1)||^2 = (phi^(1), T_{t^2} phi^(1)), so the bound reads F(t^2) <= exp(-C k (1-t)) / Omega
    for name, k in [("hyp2col", 5), ("xor", 4), ("nae", 4), ("hyp2col", 8)]:
        d = builtin(name, k)
        c = check_conditions(d).decay_constant_C
        grid = np.linspace(-1, 1, 201)
        grid = grid[(grid > 0) & (grid < 1)]
        f = np.array([float(T.iter_bound_functions(d, t * t)[0]) for t in grid])
        assert np.all(f <= np.exp(-c * k * (1 - grid)) / omega(d) + 1e-12)


def test_certify_nonreconstruction():
    t0 = T.certify_nonreconstruction(builtin("hyp2col", 3), 0.0)
    assert t0.h_ave[0] == 0.0 and t0.certified_nonrecon
    t = T.certify_nonreconstruction(builtin("hyp2col", 3), 1.0, ell_max=3)
    assert t.h_ave[0] == pytest.approx(1 - math.exp(-2), abs=1e-12)
    t8 = T.certify_nonreconstruction(builtin("hyp2col", 8), 0.5 * 127 * math.log(8) / 8)
    assert t8.certified_nonrecon
    assert all(0 <= h <= 1 for h in t8.h_ave)


def test_first_step_formulas():
    d = builtin("hyp2col", 3)
    assert T.first_step_mean(d, 1.0) == pytest.approx(1 - math.exp(-1.0))
    assert T.first_step_mean_stated(d, 1.0) == pytest.approx(1 - math.exp(-2.0))


def test_coloring_thresholds():
    s, d, r = T.coloring_thresholds(3)
    assert d == pytest.approx(1.5 * math.log(3)) and s == pytest.approx(3 * math.log(3))
    assert r > d
    with pytest.raises(DomainError):
        T.coloring_thresholds(2)


def test_threshold_report_notes():
    rep = T.threshold_report(builtin("xor", 4))
    assert rep.alpha_sat_upper == pytest.approx(1.0)
    assert any("tangency" in n for n in rep.notes)
