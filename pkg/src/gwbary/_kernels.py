"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
fallback.  Which one is bound to the public name is decided once at import
time: numba is used when it imports successfully and the environment
variable ``GWBARY_DISABLE_NUMBA`` is unset (or falsy).  The ``*_numpy``
variants stay importable either way so the two paths can be compared, see
``benchmarks/bench_kernels.py``.
"""

import os
import warnings

import numpy as np

_DISABLE = os.environ.get("GWBARY_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on",
)

try:
    if _DISABLE:
        raise ImportError("numba disabled via GWBARY_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # no-op decorator stand-in
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


# ---------------------------------------------------------------------------
# north-west corner rule


def nw_corner_numpy(xi, ups):
    """Pure-python/numpy sweep; returns (rows, cols, masses) arrays."""
    n, m = xi.shape[0], ups.shape[0]
    rows = np.empty(n + m, dtype=np.int64)
    cols = np.empty(n + m, dtype=np.int64)
    masses = np.empty(n + m, dtype=np.float64)
    i = j = k = 0
    r = float(xi[0])
    c = float(ups[0])
    while True:
        d = r if r <= c else c
        if d > 0.0:
            rows[k], cols[k], masses[k] = i, j, d
            k += 1
        r -= d
        c -= d
        if r <= 1e-16:
            i += 1
            if i >= n:
                break
            r = float(xi[i])
        elif c <= 1e-16:
            j += 1
            if j >= m:
                break
            c = float(ups[j])
    return rows[:k], cols[:k], masses[:k]


@njit(cache=True)
def _nw_corner_numba(xi, ups):
    n, m = xi.shape[0], ups.shape[0]
    rows = np.empty(n + m, dtype=np.int64)
    cols = np.empty(n + m, dtype=np.int64)
    masses = np.empty(n + m, dtype=np.float64)
    i = j = k = 0
    r = xi[0]
    c = ups[0]
    while True:
        d = r if r <= c else c
        if d > 0.0:
            rows[k] = i
            cols[k] = j
            masses[k] = d
            k += 1
        r -= d
        c -= d
        if r <= 1e-16:
            i += 1
            if i >= n:
                break
            r = xi[i]
        elif c <= 1e-16:
            j += 1
            if j >= m:
                break
            c = ups[j]
    return rows[:k], cols[:k], masses[:k]


# ---------------------------------------------------------------------------
# simultaneous north-west sweep over N couplings sharing the reference axis
#
# Couplings are handed over in a packed CSR layout: ``indptr`` has shape
# (N, m+1); ``cols``/``masses`` are the concatenated per-coupling entry
# arrays with offsets ``offs`` (length N+1).


def glue_sweep_numpy(ref_w, indptr, cols, masses, offs, cap):
    N, m = indptr.shape[0], indptr.shape[1] - 1
    out_tuples = np.empty((cap, N + 1), dtype=np.int64)
    out_masses = np.empty(cap, dtype=np.float64)
    ptr = indptr[:, 0].copy()
    rem = np.zeros(N, dtype=np.float64)
    k = 0
    for r in range(m):
        u = float(ref_w[r])
        if u <= 0.0:
            ptr[:] = indptr[:, r + 1]
            continue
        for i in range(N):
            ptr[i] = indptr[i, r]
            rem[i] = masses[offs[i] + ptr[i]] if ptr[i] < indptr[i, r + 1] else 0.0
        first = k
        while u > 1e-16:
            d = u
            for i in range(N):
                if rem[i] < d:
                    d = rem[i]
            if d <= 0.0:
                break
            out_tuples[k, 0] = r
            for i in range(N):
                out_tuples[k, i + 1] = cols[offs[i] + ptr[i]]
            out_masses[k] = d
            k += 1
            u -= d
            for i in range(N):
                rem[i] -= d
                if rem[i] <= 1e-16 and ptr[i] + 1 < indptr[i, r + 1]:
                    ptr[i] += 1
                    rem[i] = masses[offs[i] + ptr[i]]
        if u > 1e-16 and k > first:
            # numerical residue of this reference atom: absorb into its
            # largest split so the reference marginal stays exact
            best = first + int(np.argmax(out_masses[first:k]))
            out_masses[best] += u
    return out_tuples[:k], out_masses[:k]


@njit(cache=True)
def _glue_sweep_numba(ref_w, indptr, cols, masses, offs, cap):
    N, m = indptr.shape[0], indptr.shape[1] - 1
    out_tuples = np.empty((cap, N + 1), dtype=np.int64)
    out_masses = np.empty(cap, dtype=np.float64)
    ptr = np.empty(N, dtype=np.int64)
    rem = np.zeros(N, dtype=np.float64)
    k = 0
    for r in range(m):
        u = ref_w[r]
        if u <= 0.0:
            continue
        for i in range(N):
            ptr[i] = indptr[i, r]
            if ptr[i] < indptr[i, r + 1]:
                rem[i] = masses[offs[i] + ptr[i]]
            else:
                rem[i] = 0.0
        first = k
        while u > 1e-16:
            d = u
            for i in range(N):
                if rem[i] < d:
                    d = rem[i]
            if d <= 0.0:
                break
            out_tuples[k, 0] = r
            for i in range(N):
                out_tuples[k, i + 1] = cols[offs[i] + ptr[i]]
            out_masses[k] = d
            k += 1
            u -= d
            for i in range(N):
                rem[i] -= d
                if rem[i] <= 1e-16 and ptr[i] + 1 < indptr[i, r + 1]:
                    ptr[i] += 1
                    rem[i] = masses[offs[i] + ptr[i]]
        if u > 1e-16 and k > first:
            best = first
            for t in range(first, k):
                if out_masses[t] > out_masses[best]:
                    best = t
            out_masses[best] += u
    return out_tuples[:k], out_masses[:k]


# ---------------------------------------------------------------------------
# gauge gather-accumulate:  out[s, t] += w * gauge[idx[s], idx[t]]


def gather_add_numpy(out, gauge, idx, w):
    out += w * gauge[np.ix_(idx, idx)]


@njit(cache=True)
def _gather_add_numba(out, gauge, idx, w):
    K = idx.shape[0]
    for s in range(K):
        gs = gauge[idx[s]]
        for t in range(K):
            out[s, t] += w * gs[idx[t]]


# ---------------------------------------------------------------------------
# quadratic cross term of the transport mismatch over a sparse plan:
#   sum_{(i,j),(k,l) in supp} g[i,k] * h[j,l] * m[ij] * m[kl]


def gw_cross_sparse_numpy(g, h, rows, cols, masses):
    gs = g[np.ix_(rows, rows)]
    hs = h[np.ix_(cols, cols)]
    return float(masses @ (gs * hs) @ masses)


@njit(cache=True)
def _gw_cross_sparse_numba(g, h, rows, cols, masses):
    S = rows.shape[0]
    acc = 0.0
    for a in range(S):
        ia, ja, ma = rows[a], cols[a], masses[a]
        ga = g[ia]
        ha = h[ja]
        row_acc = 0.0
        for b in range(S):
            row_acc += ga[rows[b]] * ha[cols[b]] * masses[b]
        acc += ma * row_acc
    return acc


# ---------------------------------------------------------------------------
# greedy argmax assignment without replacement (rows = reference points)


def max_rule_assign_numpy(ratio):
    m = ratio.shape[1]
    T = np.full(m, -1, dtype=np.int64)
    taken = np.zeros(ratio.shape[0], dtype=bool)
    fallbacks = 0
    for col in range(m):
        r = np.where(taken, -np.inf, ratio[:, col])
        best = int(np.argmax(r))
        if r[best] <= 0.0:
            free = np.flatnonzero(~taken)
            best = int(free[0])
            fallbacks += 1
        T[col] = best
        taken[best] = True
    return T, fallbacks


@njit(cache=True)
def _max_rule_assign_numba(ratio, T, taken):
    m = ratio.shape[1]
    fallbacks = 0
    for col in range(m):
        best = -1
        best_val = 0.0
        for row in range(ratio.shape[0]):
            if taken[row]:
                continue
            v = ratio[row, col]
            if v > best_val:
                best_val = v
                best = row
        if best < 0:
            for row in range(ratio.shape[0]):
                if not taken[row]:
                    best = row
                    break
            fallbacks += 1
        T[col] = best
        taken[best] = True
    return fallbacks


def _max_rule_assign_numba_wrap(ratio):
    T = np.full(ratio.shape[1], -1, dtype=np.int64)
    taken = np.zeros(ratio.shape[0], dtype=np.bool_)
    fallbacks = _max_rule_assign_numba(ratio, T, taken)
    return T, int(fallbacks)


# ---------------------------------------------------------------------------
# binding

if HAVE_NUMBA:
    nw_corner = _nw_corner_numba
    glue_sweep = _glue_sweep_numba
    gather_add = _gather_add_numba
    gw_cross_sparse = _gw_cross_sparse_numba
    max_rule_assign = _max_rule_assign_numba_wrap
else:
    nw_corner = nw_corner_numpy
    glue_sweep = glue_sweep_numpy
    gather_add = gather_add_numpy
    gw_cross_sparse = gw_cross_sparse_numpy
    max_rule_assign = max_rule_assign_numpy


def warmup():
    """Trigger JIT compilation of all kernels on tiny inputs."""
    if not HAVE_NUMBA:
        return
    xi = np.array([0.5, 0.5])
    nw_corner(xi, xi)
    indptr = np.array([[0, 1, 2]], dtype=np.int64)
    glue_sweep(xi, indptr, np.array([0, 1], dtype=np.int64),
               np.array([0.5, 0.5]), np.array([0, 2], dtype=np.int64), 4)
    out = np.zeros((2, 2))
    gather_add(out, np.eye(2), np.array([0, 1], dtype=np.int64), 1.0)
    gw_cross_sparse(np.eye(2), np.eye(2), np.array([0, 1], dtype=np.int64),
                    np.array([0, 1], dtype=np.int64), xi)
    max_rule_assign(np.eye(2) * 0.5)
