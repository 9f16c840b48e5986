import json
import math

import numpy as np
import pytest

from csplab.clause import ClauseTable, fourier_transform, influence, noise_apply, derivative
from csplab.ensembles import (
    ClauseDistribution,
    builtin,
    check_conditions,
    dump_distribution,
    ensemble_constants,
    load_distribution,
    omega,
    omega_hat,
)
from csplab.errors import DomainError, ValidationError

from oracles import brute_inner_theta


def brute_omega(dist):
    """``1 / E[2 I_1 / ||phi||^2]`` from the truth tables directly."""
    acc = 0.0
    for phi, w in dist.explicit().support:
        v = phi.values.astype(float)
        norm = v.mean()
        d = 0.5 * (v.reshape(-1, 2)[:, 1] - v.reshape(-1, 2)[:, 0])
        acc += w * 2 * np.mean(d * d) / norm
    return 1 / acc


def test_builtin_examples():
    h = builtin("hyp2col", 3)
    assert len(h.support) == 1 and h.clauses[0].norm2() == 0.75
    x = builtin("xor", 4)
    assert len(x.support) == 2 and all(p.norm2() == 0.5 for p in x.clauses)
    with pytest.raises(DomainError):
        builtin("xor", 3)
    with pytest.raises(DomainError):
        builtin("sat", 3)
    assert len(builtin("nae", 4).support) == 16
    assert builtin("nae", 14).sign_orbit


def test_xor_is_half_parity():
    for phi, w in builtin("xor", 6).support:
        s = fourier_transform(phi)
        nz = np.flatnonzero(np.abs(s.coeffs) > 1e-15)
        assert set(nz) == {0, 63} and s.coeffs[0] == 0.5 and abs(s.coeffs[63]) == 0.5 and w == 0.5


@pytest.mark.parametrize("k", range(3, 11))
def test_omega_values(k):
    expect = 2 ** (k - 1) - 1
    assert abs(omega(builtin("hyp2col", k)) - expect) < 1e-12
    assert abs(omega(builtin("nae", k)) - expect) < 1e-12
    if k % 2 == 0:
        assert abs(omega(builtin("xor", k)) - 1) < 1e-12
        assert abs(omega_hat(builtin("xor", k)) - 1 / math.log(2)) < 1e-12


@pytest.mark.parametrize("name,k", [("hyp2col", 3), ("hyp2col", 5), ("nae", 4), ("xor", 4), ("xor", 6)])
def test_omega_matches_brute_force(name, k):
    assert omega(builtin(name, k)) == pytest.approx(brute_omega(builtin(name, k)), rel=1e-13)


def test_omega_hat_examples():
    assert omega_hat(builtin("hyp2col", 3)) == pytest.approx(1 / -math.log(0.75), abs=1e-12)
    const = ClauseDistribution(3, ((ClauseTable.constant(3), 1.0),))
    assert omega_hat(const) == math.inf
    assert omega(const) == math.inf


@pytest.mark.parametrize("name", ["hyp2col", "nae", "xor"])
@pytest.mark.parametrize("k", range(2, 13))
def test_omega_le_omega_hat(name, k):
    if name == "xor" and k % 2:
        return
    c = ensemble_constants(builtin(name, k))
    assert c.omega <= c.omega_hat + 1e-12 and not c.advisory


@pytest.mark.parametrize("name,k", [("hyp2col", 3), ("hyp2col", 6), ("nae", 3), ("nae", 5), ("xor", 4), ("nae", 14)])
def test_conditions_pass_for_builtins(name, k):
    rep = check_conditions(builtin(name, k))
    assert rep.all_passed
    assert rep.norm_floor >= 0.5
    assert rep.influence_identity_error < 1e-12
    assert rep.dominance_margin <= 1e-12
    assert rep.dominance_worst_theta == 0.0


def test_balance_failure_has_witness():
    asym = ClauseTable.from_function(2, lambda x: int(x[0] == 1))
    rep = check_conditions(ClauseDistribution(2, ((asym, 1.0),)))
    assert not rep.balanced.passed and rep.balanced.witness is not None
    assert not rep.all_passed


def test_permutation_symmetry_failure():
    phi = ClauseTable.from_function(3, lambda x: int(x[0] == x[1] or x[2] == 1))
    rep = check_conditions(ClauseDistribution(3, ((phi, 1.0),)))
    assert not rep.permutation_symmetric.passed


def test_hyp2col_dominance_margin_zero_only_at_origin():
    dist = builtin("hyp2col", 5)
    grid = np.linspace(-1, 1, 201)
    w, _ = dist.theta_norm_terms
    with np.errstate(divide="ignore"):
        margin = w @ np.log(dist.theta_norm2(grid)) - math.log(dist.clauses[0].norm2())
    assert np.all(margin[grid != 0] < 0) and margin[100] == pytest.approx(0.0, abs=1e-15)


def test_nae_dominance_chain():
    dist = builtin("nae", 4)
    grid = np.linspace(-1, 1, 41)
    norms = np.array([[brute_inner_theta(p.values, p.values, t, 4) for t in grid] for p in dist.clauses])
    with np.errstate(divide="ignore"):
        lhs = np.mean(np.log(norms), axis=0)
    rhs = np.log(np.mean(norms, axis=0))
    assert np.all(lhs <= rhs + 1e-10)
    assert np.all(rhs <= math.log(dist.clauses[0].norm2()) + 1e-10)


@pytest.mark.parametrize("k", [4, 6, 8])
def test_xor_decay_constant(k):
    assert check_conditions(builtin("xor", k)).decay_constant_C >= 1 - 1e-9


@pytest.mark.parametrize("k", range(3, 9))
def test_hyp2col_decay_identity(k):
    phi = builtin("hyp2col", k).clauses[0]
    d = derivative(phi, 1)
    s = fourier_transform(d)
    n1 = d.norm2()
    for t in np.linspace(0, 1, 101):
        ratio = float(np.sum(noise_apply(s, t).coeffs * s.coeffs)) / n1
        closed = ((1 + t) / 2) ** (k - 1) - ((1 - t) / 2) ** (k - 1)
        assert ratio == pytest.approx(closed, abs=1e-10)
        assert closed <= math.exp(-(k - 1) * (1 - t) / 2) + 1e-10


@pytest.mark.parametrize("k", range(3, 9))
def test_hyp2col_stated_decay_bound_fails_near_one(k):
    # exp(-k(1-t)/2) is too strong close to t = 1 (see the decisions ledger)
    t = 1 - 1 / k
    closed = ((1 + t) / 2) ** (k - 1) - ((1 - t) / 2) ** (k - 1)
    assert closed > math.exp(-k * (1 - t) / 2)


def test_influence_identity_all_positions():
    for name, k in [("hyp2col", 4), ("nae", 3), ("xor", 4)]:
        for phi in builtin(name, k).explicit().clauses:
            for i in range(1, k + 1):
                assert abs(influence(phi, i) - (1 - phi.norm2()) / 2) < 1e-12


def test_distribution_files(tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps({"k": 3, "clauses": [{"truth_table": "01111110", "weight": 1.0}]}))
    d = load_distribution(path)
    assert d.clauses[0] == builtin("hyp2col", 3).clauses[0]
    path.write_text(json.dumps({"k": 3, "clauses": [{"truth_table": "01111110", "weight": 0.9}]}))
    with pytest.raises(ValidationError):
        load_distribution(path)
    path.write_text(json.dumps({"k": 3, "clauses": []}))
    with pytest.raises(ValidationError):
        load_distribution(path)
    path.write_text(json.dumps({"k": 3, "clauses": [{"truth_table": "0111", "weight": 1.0}]}))
    with pytest.raises(ValidationError):
        load_distribution(path)
    out = tmp_path / "x.json"
    dump_distribution(out, builtin("xor", 4))
    back = load_distribution(out)
    assert omega(back) == 1.0 and len(back.support) == 2


def test_nae_orbit_matches_explicit():
    # the orbit representation at k = 12 against the explicit support
    dist = builtin("nae", 12)
    grid = np.linspace(-1, 1, 9)
    w, _ = dist.theta_norm_terms
    ex = dist.explicit()
    we, _ = ex.theta_norm_terms
    np.testing.assert_allclose(w @ dist.theta_norm2(grid), we @ ex.theta_norm2(grid), atol=1e-12)
