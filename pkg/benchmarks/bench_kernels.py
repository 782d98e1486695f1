"""Timing comparison of the numba kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``.  Setting
``GWBARY_DISABLE_NUMBA=1`` would bind the fallbacks package-wide; this
script instead imports both paths explicitly and reports the speedup.
"""

import time

import numpy as np

from gwbary import _kernels as K


def timeit(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_nw(n=200_000):
    rng = np.random.default_rng(0)
    xi = rng.random(n)
    xi /= xi.sum()
    ups = rng.random(n)
    ups /= ups.sum()
    return (K.nw_corner, K.nw_corner_numpy), (xi, ups)


def bench_gather(K_sz=2500):
    rng = np.random.default_rng(1)
    gauge = rng.random((K_sz, K_sz))
    gauge = 0.5 * (gauge + gauge.T)
    idx = rng.integers(0, K_sz, K_sz)
    out = np.zeros((K_sz, K_sz))
    return (K.gather_add, K.gather_add_numpy), (out, gauge, idx, 0.5)


def bench_cross(n=2500):
    rng = np.random.default_rng(2)
    g = rng.random((n, n))
    h = rng.random((n, n))
    rows = np.arange(n, dtype=np.int64)
    cols = rng.permutation(n).astype(np.int64)
    masses = np.full(n, 1.0 / n)
    return (K.gw_cross_sparse, K.gw_cross_sparse_numpy), (g, h, rows, cols,
                                                          masses)


def bench_max_rule(m=1500):
    rng = np.random.default_rng(3)
    ratio = rng.random((m, m))
    return (K.max_rule_assign, K.max_rule_assign_numpy), (ratio,)


def main():
    if not K.HAVE_NUMBA:
        print("numba unavailable or disabled; benchmarking fallbacks only")
    K.warmup()
    cases = {
        "nw_corner (n=2e5)": bench_nw(),
        "gather_add (K=2500)": bench_gather(),
        "gw_cross_sparse (S=2500)": bench_cross(),
        "max_rule_assign (m=1500)": bench_max_rule(),
    }
    print(f"{'kernel':<28}{'selected':>12}{'numpy':>12}{'speedup':>10}")
    for name, ((fast, slow), args) in cases.items():
        fast(*args)  # warm the JIT on the real shapes
        t_fast = timeit(fast, *args)
        t_slow = timeit(slow, *args)
        print(f"{name:<28}{t_fast:>11.4f}s{t_slow:>11.4f}s"
              f"{t_slow / max(t_fast, 1e-12):>9.1f}x")


if __name__ == "__main__":
    main()
