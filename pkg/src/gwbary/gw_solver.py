"""Gromov-Wasserstein functional and bi-marginal solvers.

The quadratic transport mismatch between two gauges is evaluated through
its three-term expansion (two gauge moments plus one plan-weighted cross
term), never by materializing the full four-index tensor.  The solver is
a block-coordinate descent on the bi-convex relaxation: freeze one plan
slot, solve the induced linear transport problem, swap, repeat.
"""

import csv
import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csr_matrix

from . import _kernels
from .coupling_algebra import glue_nw, melt, nw_corner_coupling
from .gmspace import GmSpace
from .ot_solvers import (Coupling, OtMethod, OtOptions, solve_inner)


@dataclass
class GwOptions:
    """Knobs for the block-coordinate descent."""

    inner: OtOptions = field(default_factory=OtOptions)
    outer_max_iter: int = 200
    outer_tol: float = 1e-9
    init: object = "product"  # "product" | "identity" | "random" | Coupling
    seed: int | None = None
    restarts: int = 0

    def __post_init__(self):
        if self.outer_max_iter < 1:
            raise ValueError("outer_max_iter must be at least 1")


@dataclass(frozen=True)
class GwResult:
    plan: Coupling
    value: float
    iterations: int
    converged: bool


def _marginal_check(space_x, space_y, plan, tol):
    if (plan.n_rows, plan.n_cols) != (space_x.n, space_y.n):
        raise ValueError(f"plan shape ({plan.n_rows}, {plan.n_cols}) does not "
                         f"match spaces ({space_x.n}, {space_y.n})")
    dev = max(np.abs(plan.row_marginal() - space_x.weights).max(),
              np.abs(plan.col_marginal() - space_y.weights).max())
    if dev > tol:
        raise ValueError(f"plan marginals deviate by {dev:.3e} (tol {tol:.1e})")


def _gauge_moments(space_x, space_y):
    gsq = float(space_x.weights @ (space_x.gauge ** 2) @ space_x.weights)
    hsq = float(space_y.weights @ (space_y.gauge ** 2) @ space_y.weights)
    return gsq + hsq


def _cross_term(g, h, plan):
    # sum_{ijkl} g[i,k] h[j,l] p[i,j] p[k,l]; route by support density
    S = plan.support_size
    n, m = plan.n_rows, plan.n_cols
    if S * S < n * m * min(n, m) // 4:
        return _kernels.gw_cross_sparse(g, h, plan.rows, plan.cols, plan.masses)
    P = plan.dense()
    return float(np.sum(P * (g @ P @ h)))


def gw_squared(space_x, space_y, plan, marginal_tol=1e-8):
    """Squared transport mismatch of the two gauges under ``plan``."""
    _marginal_check(space_x, space_y, plan, marginal_tol)
    val = _gauge_moments(space_x, space_y) \
        - 2.0 * _cross_term(space_x.gauge, space_y.gauge, plan)
    return max(val, 0.0)


def gw_functional(space_x, space_y, plan, marginal_tol=1e-8):
    """Root quadratic gauge mismatch of a plan between two spaces.

    Parameters
    ----------
    space_x, space_y : GmSpace
    plan : Coupling
        Feasible plan between the two weight vectors.
    marginal_tol : float
        Largest tolerated marginal deviation before the plan is rejected.

    Returns
    -------
    float, nonnegative
    """
    return float(np.sqrt(gw_squared(space_x, space_y, plan, marginal_tol)))


def local_cost(space_x, space_y, gamma):
    """Linearized transport cost induced by freezing one plan slot.

    C[i, j] = sum_{k,l} (g[i,k] - h[j,l])^2 gamma[k,l], computed as
    g^2-moment + h^2-moment - 2 g gamma h.
    """
    g, h = space_x.gauge, space_y.gauge
    cx = (g ** 2) @ space_x.weights
    cy = (h ** 2) @ space_y.weights
    if gamma.support_size < gamma.n_rows * gamma.n_cols // 4:
        G = csr_matrix((gamma.masses, (gamma.rows, gamma.cols)),
                       shape=(gamma.n_rows, gamma.n_cols))
        mid = np.asarray((G.T @ g).T)  # == g @ Gamma, via csr matmul
    else:
        mid = g @ gamma.dense()
    return cx[:, None] + cy[None, :] - 2.0 * (mid @ h)


def _initial_plan(space_x, space_y, init, seed):
    xi, ups = space_x.weights, space_y.weights
    if isinstance(init, Coupling):
        _marginal_check(space_x, space_y, init, 1e-8)
        return init
    if init == "product":
        return Coupling.product(xi, ups)
    if init == "identity":
        if space_x.n != space_y.n or np.abs(xi - ups).max() > 1e-10:
            raise ValueError("identity init needs matching weight vectors")
        return Coupling.identity(xi)
    if init == "random":
        rng = np.random.default_rng(seed)
        return _random_vertex(xi, ups, rng)
    raise ValueError(f"unknown init {init!r}")


def _random_vertex(xi, ups, rng):
    pr, pc = rng.permutation(xi.shape[0]), rng.permutation(ups.shape[0])
    plan = nw_corner_coupling(xi[pr], ups[pc])
    return Coupling.coo(xi.shape[0], ups.shape[0], pr[plan.rows],
                        pc[plan.cols], plan.masses)


def _bcd(space_x, space_y, plan0, opts):
    xi, ups = space_x.weights, space_y.weights
    moments = _gauge_moments(space_x, space_y)

    def f2(plan):
        return max(moments - 2.0 * _cross_term(space_x.gauge, space_y.gauge,
                                               plan), 0.0)

    exact = opts.inner.method == OtMethod.EXACT
    cur, f2_cur = plan0, f2(plan0)
    best, f2_best = cur, f2_cur
    converged = False
    it = 0
    for it in range(1, opts.outer_max_iter + 1):
        cost = local_cost(space_x, space_y, cur)
        try:
            new = solve_inner(cost, xi, ups, opts.inner, prior=cur)
        except Exception as exc:
            raise RuntimeError(
                f"inner solver failed at outer iteration {it}: {exc}") from exc
        f2_new = f2(new)
        if f2_new < f2_best:
            best, f2_best = new, f2_new
        if exact and f2_new > f2_cur + 1e-12:
            # exact inner steps should never ascend; stop at the best plan
            converged = True
            break
        delta = abs(f2_cur - f2_new)
        cur, f2_cur = new, f2_new
        if delta <= opts.outer_tol * max(f2_cur, 1e-16):
            converged = True
            break
    return best, f2_best, it, converged


def solve_gw(space_x, space_y, opts=None):
    """Approximate the gauge-transport distance by block-coordinate descent.

    Starting from an initial plan, alternately freeze one slot of the
    bi-convex relaxation and solve the induced linear problem with the
    configured inner solver until the squared objective stalls.  The
    reported value never exceeds the objective of the initial plan; with
    the exact inner solver the iterates are accepted only while the
    objective is non-increasing.

    Parameters
    ----------
    space_x, space_y : GmSpace
    opts : GwOptions

    Returns
    -------
    GwResult with the best plan found, its root objective value, the
    number of outer iterations, and a convergence flag.
    """
    opts = opts or GwOptions()
    plan0 = _initial_plan(space_x, space_y, opts.init, opts.seed)
    best, f2_best, iters, converged = _bcd(space_x, space_y, plan0, opts)
    rng = np.random.default_rng(opts.seed)
    for _ in range(opts.restarts):
        alt0 = _random_vertex(space_x.weights, space_y.weights, rng)
        alt, f2_alt, extra, conv_alt = _bcd(space_x, space_y, alt0, opts)
        iters += extra
        if f2_alt < f2_best:
            best, f2_best, converged = alt, f2_alt, conv_alt
    return GwResult(plan=best, value=float(np.sqrt(f2_best)),
                    iterations=iters, converged=converged)


def brute_force_gw(space_x, space_y, max_size=8):
    """Exact minimum over all permutation plans (uniform same-size spaces).

    Desk-scale certification oracle: enumerates all n! relabelings, so n
    is capped at ``max_size``.  Requires uniform weights on both sides,
    where vertex plans of the transport polytope are exactly the
    permutation matrices.
    """
    n = space_x.n
    if space_y.n != n:
        raise ValueError("brute force needs same-size spaces")
    if n > max_size:
        raise ValueError(f"brute force capped at n={max_size}, got {n}")
    for w in (space_x.weights, space_y.weights):
        if np.abs(w - 1.0 / n).max() > 1e-12:
            raise ValueError("brute force requires uniform weights")
    g, h = space_x.gauge, space_y.gauge
    best_val = np.inf
    best_perm = None
    count = 0
    for perm in itertools.permutations(range(n)):
        count += 1
        hp = h[np.ix_(perm, perm)]
        val = float(((g - hp) ** 2).sum()) / (n * n)
        if val < best_val - 1e-15:
            best_val = val
            best_perm = perm
    plan = Coupling.coo(n, n, np.arange(n), np.array(best_perm),
                        np.full(n, 1.0 / n))
    return GwResult(plan=plan, value=float(np.sqrt(max(best_val, 0.0))),
                    iterations=count, converged=True)


def compose_plans(plan_kx, plan_ky, ref_weights):
    """Feasible plan X->Y routed through a shared middle space.

    Both inputs must have the middle space as their row marginal; the
    result is the melting of their north-west gluing.
    """
    glued = glue_nw([plan_kx, plan_ky], ref_weights=ref_weights)
    mu = melt(glued)
    return Coupling.coo(plan_kx.n_cols, plan_ky.n_cols, mu.tuples[:, 0],
                        mu.tuples[:, 1], mu.masses)


def pairwise_matrix(spaces, opts=None, restart_rounds=1, threads=None,
                    return_plans=False):
    """All-pairs transport distances with triangle-violation restarts.

    Solves every (i, j) pair, then repeatedly looks for triples where the
    computed values break the triangle inequality -- a certificate that
    the (i, j) solve is stuck in a local minimum -- and restarts that
    solve from the composition of the two offending plans through the
    middle space.  Entries never increase across rounds.

    Parameters
    ----------
    spaces : list of GmSpace
    opts : GwOptions
    restart_rounds : int
        Number of triangle-repair sweeps.
    threads : int, optional
        Worker threads for the pairwise solves.
    return_plans : bool
        Also return {(i, j): Coupling} for i < j.

    Returns
    -------
    (N, N) symmetric array with zero diagonal [, plan dict].
    """
    if len(spaces) < 2:
        raise ValueError("need at least two spaces")
    opts = opts or GwOptions()
    N = len(spaces)
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]

    def solve_pair(pair, init=None):
        i, j = pair
        local = replace(opts, init=init) if init is not None else opts
        try:
            return pair, solve_gw(spaces[i], spaces[j], local)
        except Exception as exc:
            raise RuntimeError(f"pair ({i}, {j}): {exc}") from exc

    dist = np.zeros((N, N))
    plans = {}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for (i, j), res in pool.map(solve_pair, pairs):
            dist[i, j] = dist[j, i] = res.value
            plans[i, j] = res.plan

    def plan_from(k, i):
        # plan with row marginal on space k and column marginal on space i
        return plans[k, i] if k < i else plans[i, k].transpose()

    for _ in range(restart_rounds):
        repairs = []
        for i, j in pairs:
            via = dist[i, :] + dist[:, j]
            via[i] = via[j] = np.inf
            k = int(np.argmin(via))
            if via[k] < dist[i, j] - 1e-12:
                repairs.append((i, j, k))
        if not repairs:
            break
        for i, j, k in repairs:
            init = compose_plans(plan_from(k, i), plan_from(k, j),
                                 spaces[k].weights)
            _, res = solve_pair((i, j), init=init)
            if res.value < dist[i, j]:
                dist[i, j] = dist[j, i] = res.value
                plans[i, j] = res.plan
    if return_plans:
        return dist, plans
    return dist


def save_matrix_csv(path, matrix, labels=None):
    matrix = np.asarray(matrix)
    labels = labels or [f"s{i}" for i in range(matrix.shape[0])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(labels)
        for row in matrix:
            writer.writerow([repr(float(x)) for x in row])


def load_matrix_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        labels = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    return np.array(rows), labels
