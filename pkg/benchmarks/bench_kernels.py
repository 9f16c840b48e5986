"""Compiled vs pure-Python kernel timings (and a result-equality check).

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import time

import numpy as np

from csplab import ensembles, graphsim, kernels
from csplab.treesim import TreeModel


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def cases():
    rng = np.random.default_rng(0)
    vec = rng.standard_normal(1 << 16)
    model = TreeModel(ensembles.builtin("xor", 4))
    cdf = model.poisson_cdf(4 * 0.9)
    u = np.random.default_rng([1, 0]).random(1 << 16)
    inst = graphsim.sample_instance(ensembles.builtin("hyp2col", 3), 16, 0.5, seed=0)
    tabs = np.array([inst.dist.clauses[c].values for c in inst.clause_index], dtype=np.uint8)
    cvars = np.ascontiguousarray(inst.clause_vars.reshape(inst.m, inst.k))
    col = graphsim.sample_coloring_instance(10, 3, 1.0, seed=0)
    edges = np.ascontiguousarray(col.edges)

    def wht_case(mod):
        a = vec.copy()
        mod.wht(a, 16)
        return a

    return {
        "wht (k=16)": wht_case,
        "recursion_decide (k=4, c=3.2)": lambda mod: mod.recursion_decide(3.2, 3.0, 10**6),
        "lazy_bias (xor4, depth 5)": lambda mod: mod.lazy_bias(
            model.tables, model.s_sets, model.s_sizes, model.kills, model.cum_w, cdf, u, 1, 5, 10**7
        ),
        "enumerate_binary (n=16)": lambda mod: mod.enumerate_binary(16, cvars, np.ascontiguousarray(tabs), 10**6),
        "enumerate_colorings (n=10, q=3)": lambda mod: mod.enumerate_colorings(10, 3, edges, 10**6),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    backends = kernels.backends()
    if "compiled" not in backends:
        print("compiled extension not available; timing the fallback only")
    print(f"{'kernel':36s} {'python [s]':>12s} {'compiled [s]':>13s} {'speedup':>8s}  equal")
    for name, fn in cases().items():
        t_py, r_py = _time(lambda: fn(backends["python"]), args.repeat)
        if "compiled" in backends:
            t_c, r_c = _time(lambda: fn(backends["compiled"]), args.repeat)
            print(f"{name:36s} {t_py:12.4f} {t_c:13.4f} {t_py / t_c:8.1f}  {_same(r_py, r_c)}")
        else:
            print(f"{name:36s} {t_py:12.4f} {'-':>13s} {'-':>8s}  -")


if __name__ == "__main__":
    main()
