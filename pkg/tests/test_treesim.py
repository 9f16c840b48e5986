import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from csplab import thresholds as T
from csplab import treesim as S
from csplab.ensembles import builtin
from csplab.errors import DomainError, SizeCapError, ValidationError

from oracles import brute_root_bias, tree_variables


def small_trees(dist, alpha, depth, count, seed, max_vars=20):
    out = []
    s = 0
    while len(out) < count:
        t = S.sample_tree(dist, alpha, depth, seed=[seed, s])
        s += 1
        if t.n_variables <= max_vars:
            out.append(t)
    return out


def test_sample_tree_structure():
    d = builtin("hyp2col", 3)
    t = S.sample_tree(d, 0.0, 3, seed=0)
    assert t.n_variables == 1 and t.root_degree == 0
    t = S.sample_tree(d, 1.0, 1, seed=1, root_degree=1)
    assert t.n_factors == 1 and t.generation_sizes == [1, 2]
    degs = [S.sample_tree(d, 2 / 3, 1, seed=[2, i]).root_degree for i in range(20_000)]
    assert abs(np.mean(degs) - 2.0) < 3 * math.sqrt(2.0 / 20_000)


def test_sample_tree_cap():
    with pytest.raises(SizeCapError):
        S.sample_tree(builtin("xor", 4), 2.0, 12, node_cap=1000)


def test_broadcast_xor_parity():
    d = builtin("xor", 4)
    t = S.sample_tree(d, 0.7, 2, seed=3)
    b = S.broadcast(t, 1, seed=4)
    _, clauses, _ = tree_variables(t)
    flat = np.concatenate(b.assignment)
    tables = [p.values for p in t.model.dist.clauses]
    for c, vs in clauses:
        idx = sum(1 << i for i, v in enumerate(vs) if flat[v] == 1)
        assert tables[c][idx] == 1
    assert S.broadcast(S.sample_tree(d, 0.5, 0), -1).leaf_slice.tolist() == [-1]
    with pytest.raises(DomainError):
        S.broadcast(t, 0)


def test_broadcast_hyp2col_uniform_completions():
    d = builtin("hyp2col", 3)
    t = S.sample_tree(d, 1.0, 1, seed=0, root_degree=1)
    counts = np.zeros(4)
    for s in range(6000):
        leaves = S.broadcast(t, 1, seed=s).leaf_slice
        counts[(leaves[0] > 0) + 2 * (leaves[1] > 0)] += 1
    assert counts[3] == 0  # the all-equal completion (+1, +1) is forbidden
    assert np.all(np.abs(counts[:3] - 2000) < 4 * math.sqrt(2000))


@pytest.mark.parametrize("name,k,alpha,depth", [("hyp2col", 3, 0.6, 2), ("xor", 4, 0.5, 2), ("nae", 3, 0.5, 2)])
def test_root_bias_matches_brute_force(name, k, alpha, depth):
    d = builtin(name, k)
    for i, t in enumerate(small_trees(d, alpha, depth, 25, seed=100 * k + len(name))):
        leaves = S.broadcast(t, 1 if i % 2 else -1, seed=i).leaf_slice
        tables = [p.values for p in t.model.dist.clauses]
        assert abs(S.root_bias(t, leaves).h - brute_root_bias(t, tables, leaves)) < 1e-10


def test_root_bias_errors_and_trivial_cases():
    d = builtin("xor", 4)
    t = S.sample_tree(d, 1.0, 1, seed=0, root_degree=1)
    with pytest.raises(ValidationError):
        S.root_bias(t, [1, 1])
    with pytest.raises(ValidationError):
        S.root_bias(t, [1, 1, 2])
    b = S.broadcast(t, 1, seed=0).leaf_slice.copy()
    b[0] = -b[0]
    assert S.root_bias(t, b).h == -1.0
    # alpha = 0: the depth-3 boundary is empty, so the leaves carry no information
    t0 = S.sample_tree(d, 0.0, 3, seed=0)
    assert t0.generation_sizes == [1, 0, 0, 0]
    assert S.root_bias(t0, np.zeros(0, dtype=np.int8)).h == 0.0


def test_xor_biases_are_ternary():
    h = S.sample_biases(builtin("xor", 4), 0.85, 3, 2000, seed=5)
    assert set(np.unique(h)) <= {-1.0, 0.0, 1.0}


def test_depth1_first_step():
    d = builtin("hyp2col", 3)
    h = S.sample_biases(d, 1.0, 1, 10_000, seed=11)
    assert set(np.unique(h)) <= {0.0, 1.0}
    p = T.first_step_mean(d, 1.0)
    assert abs(h.mean() - p) < 3 * math.sqrt(p * (1 - p) / h.size) + 1e-12
    expl = S.sample_biases(d, 1.0, 1, 300, seed=12, method="explicit")
    assert set(np.unique(expl)) <= {0.0, 1.0}


def test_lazy_and_explicit_agree_in_law():
    for name, k, a, depth in [("xor", 4, 0.85, 3), ("hyp2col", 3, 0.8, 3)]:
        d = builtin(name, k)
        lazy = S.sample_biases(d, a, depth, 4000, seed=1)
        expl = S.sample_biases(d, a, depth, 4000, seed=2, method="explicit")
        se = math.sqrt(lazy.var() / 4000 + expl.var() / 4000)
        assert abs(lazy.mean() - expl.mean()) < 4 * se
        assert ks_2samp(lazy, expl).pvalue > 1e-3


def test_reproducible_and_worker_invariant():
    d = builtin("xor", 4)
    a = S.sample_biases(d, 0.9, 4, 500, seed=3, workers=1)
    b = S.sample_biases(d, 0.9, 4, 500, seed=3, workers=2)
    c = S.sample_biases(d, 0.9, 4, 500, seed=3, workers=1)
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_alpha_zero_statistics():
    st = S.reconstruction_estimate(builtin("hyp2col", 3), 0.0, 3, 100)
    assert st.mean_abs_h == st.mean_h_plus == st.z_rate == 0.0


def test_root_symmetry():
    d = builtin("hyp2col", 3)
    plus = S.sample_biases(d, 1.2, 2, 10_000, seed=1)
    minus = S.sample_biases(d, 1.2, 2, 10_000, seed=2, root_value=-1)
    assert ks_2samp(plus, -minus).pvalue > 1e-3


def test_depth_monotone_and_bracket():
    d = builtin("hyp2col", 3)
    prev = None
    for depth in range(1, 5):
        st = S.reconstruction_estimate(d, 1.5, depth, 5000, seed=depth)
        if prev is not None:
            assert st.mean_abs_h <= prev.mean_abs_h + 3 * math.hypot(st.se_mean_abs_h, prev.se_mean_abs_h)
        assert st.mean_h_plus <= st.mean_abs_h + 3 * st.se_mean_abs_h
        assert st.mean_h_plus >= st.mean_abs_h**2 - 3 * (st.se_mean_h_plus + 2 * st.se_mean_abs_h)
        prev = st


@pytest.mark.parametrize("name,k,alpha", [("hyp2col", 3, 2.6), ("nae", 4, 2.5), ("xor", 4, 0.9)])
def test_z_rate_lower_bounds_recursion(name, k, alpha):
    d = builtin(name, k)
    z = T.naive_recursion_limit(d, alpha, max_iter=4).z
    for depth in (1, 2, 3):
        st = S.reconstruction_estimate(d, alpha, depth, 3000, seed=depth)
        assert st.z_rate >= z[depth] - 3 * max(st.se_z_rate, 1e-3)


def test_consistency_diagnostics():
    zeros = S.consistency_diagnostics(np.zeros(50))
    assert zeros.passed and zeros.mean_diff == 0
    h = S.sample_biases(builtin("hyp2col", 3), 1.0, 1, 2000, seed=0)
    assert S.consistency_diagnostics(h).mean_diff == 0.0
    h3 = S.sample_biases(builtin("hyp2col", 3), 1.5, 3, 10_000, seed=0)
    assert S.consistency_diagnostics(h3).passed
    with pytest.raises(DomainError):
        S.consistency_diagnostics([])


def test_node_cap_env(monkeypatch):
    monkeypatch.setenv("CSPLAB_MAX_NODES", "50")
    with pytest.raises(SizeCapError):
        S.sample_biases(builtin("xor", 4), 1.5, 6, 20)
