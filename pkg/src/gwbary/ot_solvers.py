"""Inner linear optimal-transport solvers.

The exact solver returns vertex solutions of the transport polytope
(support at most n + m - 1), which the downstream gluing step relies on.
The entropic solvers run in the log domain and therefore survive small
regularization strengths.
"""

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix, eye as speye, kron as spkron, vstack as spvstack
from scipy.special import logsumexp

MARGINAL_TOL = 1e-10


class NonConvergenceError(RuntimeError):
    """Raised (in strict mode) when an iterative solver runs out of budget."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class OtMethod(Enum):
    EXACT = "exact"
    SINKHORN = "sinkhorn"
    KL_PROX = "kl-prox"


@dataclass
class OtOptions:
    method: OtMethod = OtMethod.EXACT
    epsilon: float = 1e-2
    max_iter: int = 2000
    tol: float = 1e-9

    def __post_init__(self):
        if self.method != OtMethod.EXACT and self.epsilon <= 0:
            raise ValueError("epsilon must be positive for entropic solvers")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class Coupling:
    """A transport plan stored as sorted COO triplets with positive mass."""

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray

    @classmethod
    def coo(cls, n_rows, n_cols, rows, cols, masses):
        """Canonicalize triplets: merge duplicates, drop zeros, sort."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        masses = np.asarray(masses, dtype=np.float64)
        mat = coo_matrix((masses, (rows, cols)), shape=(n_rows, n_cols))
        mat.sum_duplicates()
        mat = mat.tocsr().tocoo()  # csr round-trip sorts indices
        keep = mat.data > 0
        return cls(n_rows, n_cols, mat.row[keep].astype(np.int64),
                   mat.col[keep].astype(np.int64), mat.data[keep])

    @classmethod
    def from_dense(cls, arr, drop_tol=0.0):
        arr = np.asarray(arr, dtype=np.float64)
        rows, cols = np.nonzero(arr > drop_tol)
        return cls.coo(arr.shape[0], arr.shape[1], rows, cols, arr[rows, cols])

    @classmethod
    def identity(cls, weights):
        w = np.asarray(weights, dtype=np.float64)
        idx = np.arange(w.shape[0], dtype=np.int64)
        keep = w > 0
        return cls(w.shape[0], w.shape[0], idx[keep], idx[keep], w[keep])

    @classmethod
    def product(cls, xi, ups):
        return cls.from_dense(np.outer(xi, ups))

    @property
    def support_size(self):
        return self.rows.shape[0]

    def dense(self):
        out = np.zeros((self.n_rows, self.n_cols))
        out[self.rows, self.cols] = self.masses
        return out

    def row_marginal(self):
        return np.bincount(self.rows, weights=self.masses, minlength=self.n_rows)

    def col_marginal(self):
        return np.bincount(self.cols, weights=self.masses, minlength=self.n_cols)

    def transpose(self):
        return Coupling.coo(self.n_cols, self.n_rows, self.cols, self.rows,
                            self.masses)

    def total_mass(self):
        return float(self.masses.sum())

    def validate(self, xi=None, ups=None, tol=MARGINAL_TOL):
        """Returns a list of invariant violations (empty when valid)."""
        report = []
        if np.any(self.masses < 0):
            report.append("negative mass")
        if abs(self.total_mass() - 1.0) > tol:
            report.append(f"total mass {self.total_mass()!r} != 1")
        if xi is not None and np.abs(self.row_marginal() - xi).max() > tol:
            report.append("row marginal mismatch")
        if ups is not None and np.abs(self.col_marginal() - ups).max() > tol:
            report.append("column marginal mismatch")
        return report


def _check_marginals(cost, xi, ups, tol=1e-8):
    cost = np.asarray(cost, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    ups = np.asarray(ups, dtype=np.float64)
    if cost.shape != (xi.shape[0], ups.shape[0]):
        raise ValueError(f"cost shape {cost.shape} does not match marginals")
    if not np.isfinite(cost).all():
        raise ValueError("cost has non-finite entries")
    if np.any(xi < 0) or np.any(ups < 0):
        raise ValueError("marginals must be nonnegative")
    if abs(xi.sum() - ups.sum()) > tol or abs(xi.sum() - 1.0) > tol:
        raise ValueError(
            f"infeasible marginals: sums {xi.sum()!r} vs {ups.sum()!r}")
    return cost, xi / xi.sum(), ups / ups.sum()


def _is_uniform(w):
    return np.abs(w - 1.0 / w.shape[0]).max() <= 1e-12


def _forest_repair(n, m, rows, cols, masses, xi, ups):
    """Recompute masses on a spanning-forest support from the marginals.

    Basic solutions of the transportation LP are forests in the bipartite
    row/column graph; peeling leaves reconstructs their masses exactly,
    which removes the solver's feasibility slack.  Edges closing a cycle
    (not expected from a simplex basis) are dropped up front, largest
    masses kept.  Falls back to the raw masses if the peel goes negative.
    """
    order = np.argsort(-masses, kind="stable")
    parent = np.arange(n + m)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    keep = []
    for e in order:
        ra, ca = find(rows[e]), find(n + cols[e])
        if ra == ca:
            continue
        parent[ra] = ca
        keep.append(e)
    keep = np.array(sorted(keep), dtype=np.int64)
    rows, cols = rows[keep], cols[keep]

    row_rem = xi.copy()
    col_rem = ups.copy()
    row_deg = np.bincount(rows, minlength=n)
    col_deg = np.bincount(cols, minlength=m)
    edges_of_row = [[] for _ in range(n)]
    edges_of_col = [[] for _ in range(m)]
    for e in range(rows.shape[0]):
        edges_of_row[rows[e]].append(e)
        edges_of_col[cols[e]].append(e)
    out = np.zeros(rows.shape[0])
    alive = np.ones(rows.shape[0], dtype=bool)
    stack = [("r", i) for i in range(n) if row_deg[i] == 1]
    stack += [("c", j) for j in range(m) if col_deg[j] == 1]
    while stack:
        side, node = stack.pop()
        edges = edges_of_row[node] if side == "r" else edges_of_col[node]
        e = next((e for e in edges if alive[e]), None)
        if e is None:
            continue
        val = row_rem[rows[e]] if side == "r" else col_rem[cols[e]]
        out[e] = val
        alive[e] = False
        row_rem[rows[e]] -= val
        col_rem[cols[e]] -= val
        row_deg[rows[e]] -= 1
        col_deg[cols[e]] -= 1
        if row_deg[rows[e]] == 1:
            stack.append(("r", rows[e]))
        if col_deg[cols[e]] == 1:
            stack.append(("c", cols[e]))
    if np.any(out < -1e-9) or alive.any():
        return None
    return rows, cols, np.maximum(out, 0.0)


def solve_exact(cost, xi, ups, tol=1e-9):
    """Exact Kantorovich transport, returned as a polytope vertex.

    Uniform marginals of equal size are solved as an assignment problem;
    everything else goes through the HiGHS dual simplex on the
    transportation LP.  Either way the support is a forest with at most
    n + m - 1 entries and the marginals are met to machine accuracy.

    Parameters
    ----------
    cost : array, shape (n, m)
    xi, ups : probability vectors

    Returns
    -------
    Coupling
    """
    cost, xi, ups = _check_marginals(cost, xi, ups)
    n, m = cost.shape
    if n == m and _is_uniform(xi) and _is_uniform(ups):
        row_ind, col_ind = linear_sum_assignment(cost)
        return Coupling.coo(n, m, row_ind, col_ind, np.full(n, 1.0 / n))
    A_rows = spkron(speye(n, format="csr"), np.ones((1, m)), format="csr")
    A_cols = spkron(np.ones((1, n)), speye(m, format="csr"), format="csr")
    A_eq = spvstack([A_rows, A_cols]).tocsr()[:-1]  # drop one redundant row
    b_eq = np.concatenate([xi, ups])[:-1]
    res = linprog(cost.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"exact transport solver failed: {res.message}")
    x = res.x.reshape(n, m)
    rows, cols = np.nonzero(x > 1e-12)
    repaired = _forest_repair(n, m, rows.astype(np.int64),
                              cols.astype(np.int64), x[rows, cols], xi, ups)
    if repaired is None:
        warnings.warn("transport support was not a forest; keeping raw masses")
        return Coupling.coo(n, m, rows, cols, x[rows, cols])
    return Coupling.coo(n, m, *repaired)


def transport_cost(cost, plan):
    return float(np.sum(cost[plan.rows, plan.cols] * plan.masses))


def _sinkhorn_core(cost, xi, ups, epsilon, max_iter, tol, log_prior,
                   log, strict, name):
    with np.errstate(divide="ignore"):
        logxi = np.log(xi)
        logups = np.log(ups)
    logK = -cost / epsilon + log_prior
    u = np.zeros_like(xi)
    v = np.zeros_like(ups)
    errs = []
    err = np.inf
    for it in range(1, max_iter + 1):
        u = logxi - logsumexp(logK + v[None, :], axis=1)
        u[xi == 0] = -np.inf
        v = logups - logsumexp(logK + u[:, None], axis=0)
        v[ups == 0] = -np.inf
        P = np.exp(u[:, None] + logK + v[None, :])
        if not np.isfinite(P).all():
            raise FloatingPointError(
                f"{name}: numerical underflow/overflow at epsilon={epsilon}; "
                "increase epsilon")
        err = float(np.abs(P.sum(axis=1) - xi).sum())
        errs.append(err)
        if err < tol:
            break
    else:
        msg = (f"{name} did not converge in {max_iter} iterations "
               f"(marginal violation {err:.3e})")
        if strict:
            raise NonConvergenceError(msg, violation=err)
        warnings.warn(msg)
    plan = Coupling.from_dense(P)
    if log:
        return plan, {"err": errs, "iterations": len(errs), "u": u, "v": v}
    return plan


def solve_sinkhorn(cost, xi, ups, epsilon, max_iter=2000, tol=1e-9,
                   log=False, strict=False):
    """Entropic transport: minimize <cost, p> + epsilon * KL(p, xi (x) ups).

    Runs matrix scaling in the log domain.  The returned plan is dense
    (strictly positive wherever both marginals are) and satisfies the
    marginal constraints up to ``tol`` in L1.

    Parameters
    ----------
    cost : array, shape (n, m)
    xi, ups : probability vectors
    epsilon : float
        Regularization strength, > 0.
    max_iter : int
    tol : float
        L1 row-marginal violation at which to stop.
    log : bool
        Also return a dict with the violation history.
    strict : bool
        Raise NonConvergenceError instead of warning when the budget is
        exhausted.
    """
    cost, xi, ups = _check_marginals(cost, xi, ups)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    with np.errstate(divide="ignore"):
        log_prior = np.log(xi)[:, None] + np.log(ups)[None, :]
    return _sinkhorn_core(cost, xi, ups, epsilon, max_iter, tol, log_prior,
                          log, strict, "sinkhorn")


def solve_kl_prox(cost, xi, ups, prior, epsilon, max_iter=2000, tol=1e-9,
                  log=False, strict=False):
    """Proximal transport step: minimize <cost, p> + epsilon * KL(p, prior).

    The prior must be a feasible plan for (xi, ups); the result is
    supported inside the prior's support.
    """
    cost, xi, ups = _check_marginals(cost, xi, ups)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    bad = prior.validate(xi, ups, tol=1e-6)
    if bad:
        raise ValueError(f"prox prior is not feasible: {'; '.join(bad)}")
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior.dense())
    return _sinkhorn_core(cost, xi, ups, epsilon, max_iter, tol, log_prior,
                          log, strict, "kl-prox")


def solve_inner(cost, xi, ups, opts, prior=None, strict=False):
    """Dispatch one linear OT solve according to ``opts.method``."""
    if opts.method == OtMethod.EXACT:
        return solve_exact(cost, xi, ups, tol=opts.tol)
    if opts.method == OtMethod.SINKHORN:
        return solve_sinkhorn(cost, xi, ups, opts.epsilon,
                              max_iter=opts.max_iter, tol=opts.tol,
                              strict=strict)
    if prior is None:
        raise ValueError("kl-prox requires a prior plan")
    return solve_kl_prox(cost, xi, ups, prior, opts.epsilon,
                         max_iter=opts.max_iter, tol=opts.tol, strict=strict)


# ---------------------------------------------------------------------------
# coo-tsv plan files


def save_coupling(plan, path):
    with open(path, "w") as fh:
        fh.write(f"{plan.n_rows} {plan.n_cols}\n")
        for i, j, w in zip(plan.rows, plan.cols, plan.masses):
            fh.write(f"{i}\t{j}\t{w!r}\n")


def load_coupling(path):
    with open(path) as fh:
        n, m = (int(t) for t in fh.readline().split())
        rows, cols, masses = [], [], []
        for line in fh:
            if not line.strip():
                continue
            i, j, w = line.split("\t")
            rows.append(int(i))
            cols.append(int(j))
            masses.append(float(w))
    return Coupling.coo(n, m, rows, cols, masses)
