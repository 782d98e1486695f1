"""Free-support barycenters of gauged measure spaces.

The engine is a fixpoint iteration: solve one transport plan from the
current reference space to every input, glue the plans along the
reference, drop the reference axis, and let the merged multi-marginal
plan with the weight-averaged gauge become the next reference.  Only the
final gauge depends on the barycentric coordinates, so one run yields
the whole interpolation family; ``reweigh`` re-reads it at any weight
vector without touching a solver.
"""

import json
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import _kernels
from .coupling_algebra import (MultiCoupling, bimarginal, glue_nw,
                               load_multicoupling, max_rule_without_replacement,
                               melt, save_multicoupling)
from .gmspace import GmSpace, load_space
from .gw_solver import GwOptions, gw_functional, solve_gw
from .ot_solvers import Coupling, OtMethod


class GlueRule(Enum):
    NW_CORNER = "nw"
    MAX_RULE = "maxrule"


class StopRule(Enum):
    LOSS_INCREASE = "loss-increase"
    REL_TOL = "rel-tol"
    FIXED_ITERS = "fixed-iters"


@dataclass
class BaryOptions:
    glue_rule: GlueRule = GlueRule.NW_CORNER
    gw: GwOptions = field(default_factory=GwOptions)
    max_outer: int = 50
    stop: StopRule = StopRule.LOSS_INCREASE
    rel_tol: float = 1e-9
    fixed_iters: int = 3
    first_pass_plans: list | None = None  # optional given plans for pass 1
    keep_history: bool = False

    def __post_init__(self):
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")


@dataclass
class BarycenterState:
    """Output of the fixpoint iteration.

    ``melting`` together with ``rho`` determines the barycenter space;
    ``plans`` are the transport plans the final melting was built from,
    oriented (previous reference) x (input i).
    """

    inputs: tuple
    melting: MultiCoupling
    rho: np.ndarray
    loss_history: list
    plans: list
    melting_history: list | None = None
    plans_history: list | None = None

    def space(self, rho=None, label="barycenter"):
        return mean_gauge(self.inputs, self.melting,
                          self.rho if rho is None else rho, label=label)


def _check_rho(rho, n):
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (n,):
        raise ValueError(f"rho must have length {n}")
    if np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-12:
        raise ValueError("rho must lie on the probability simplex")
    return rho


def mean_gauge(inputs, mu, rho, label="barycenter"):
    """Space on the support of ``mu`` carrying the rho-averaged gauge.

    Entry (s, t) is sum_i rho_i * g_i(tuple_s[i], tuple_t[i]); the
    weights are the melting masses.
    """
    rho = _check_rho(rho, len(inputs))
    if mu.n_marginals != len(inputs):
        raise ValueError("melting arity does not match the input count")
    K = mu.support_size
    gauge = np.zeros((K, K))
    for i, space in enumerate(inputs):
        if rho[i] != 0.0:
            _kernels.gather_add(gauge, space.gauge,
                                np.ascontiguousarray(mu.tuples[:, i]), rho[i])
    return GmSpace(gauge=gauge, weights=mu.masses.copy(), label=label)


def mgw_functional(inputs, rho, mu, marginal_tol=1e-8):
    """Multi-marginal mismatch of ``mu``: the rho-pair-weighted quadratic
    spread of the input gauges along the plan.

    Evaluated through the variance identity
    (1/2) sum_{ij} r_i r_j |a_i - a_j|^2 = sum_i r_i |a_i - mean|^2,
    i.e. as the rho-weighted squared deviation of each pulled-back gauge
    from the mean gauge.
    """
    rho = _check_rho(rho, len(inputs))
    bad = mu.validate([s.weights for s in inputs], tol=marginal_tol)
    if bad:
        raise ValueError(f"melting infeasible: {'; '.join(bad)}")
    mean = mean_gauge(inputs, mu, rho)
    total = 0.0
    for i, space in enumerate(inputs):
        if rho[i] == 0.0:
            continue
        pulled = np.zeros_like(mean.gauge)
        _kernels.gather_add(pulled, space.gauge,
                            np.ascontiguousarray(mu.tuples[:, i]), 1.0)
        dev = pulled - mean.gauge
        total += rho[i] * float(mu.masses @ (dev * dev) @ mu.masses)
    return total


def melting_plan(mu, i):
    """Plan between the melting-support space and input ``i``.

    Row s (a support tuple) sends its whole mass to the tuple's i-th
    component.
    """
    K = mu.support_size
    return Coupling.coo(K, mu.sizes[i], np.arange(K, dtype=np.int64),
                        mu.tuples[:, i], mu.masses)


def gwb_loss(inputs, rho, space_y, gw_opts=None, init_plans=None):
    """Barycentric loss of ``space_y``: rho-weighted sum of squared
    transport distances to the inputs.

    The distances come from the block-coordinate solver, so the result
    is an upper bound on the true loss; ``init_plans`` (oriented
    space_y x input_i) seed the solves.
    """
    rho = _check_rho(rho, len(inputs))
    gw_opts = gw_opts or GwOptions()
    total = 0.0
    for i, space in enumerate(inputs):
        if rho[i] == 0.0:
            continue
        opts = gw_opts
        if init_plans is not None and init_plans[i] is not None:
            opts = replace(gw_opts, init=init_plans[i])
        total += rho[i] * solve_gw(space_y, space, opts).value ** 2
    return total


def _spaces_match(a, b):
    return (a.n == b.n
            and np.abs(a.weights - b.weights).max() <= 1e-12
            and np.abs(a.gauge - b.gauge).max() <= 1e-12)


def _default_gw_solve(space_y, space_x, opts, warm):
    if warm is not None:
        opts = replace(opts, init=warm)
    return solve_gw(space_y, space_x, opts)


def _check_max_rule(inputs, init):
    m = inputs[0].n
    for k, space in enumerate(list(inputs) + [init]):
        who = "initial space" if k == len(inputs) else f"input {k}"
        if space.n != m:
            raise ValueError(f"max rule requires equal sizes; {who} has "
                             f"{space.n} points, expected {m}")
        if np.abs(space.weights - 1.0 / m).max() > 1e-12:
            raise ValueError(f"max rule requires uniform weights; {who} "
                             "is not uniform")


def iterate(inputs, rho, init, opts=None, gw_solve=None):
    """Run the fixpoint iteration for the barycentric loss.

    Each pass solves one plan from the current reference to every input
    (warm-started from the previous melting), records the resulting loss
    of the current reference, then builds the next reference from the
    glued-and-melted plans and the mean gauge.

    Parameters
    ----------
    inputs : list of GmSpace
    rho : barycentric coordinates on the simplex
    init : GmSpace
        Initial reference.  When it coincides with ``inputs[0]``, the
        first plan to input 0 is the identity and is not solved for.
    opts : BaryOptions
    gw_solve : callable, optional
        Pluggable step solver ``(Y, X, gw_opts, warm_plan) -> GwResult``;
        defaults to the block-coordinate descent.

    Returns
    -------
    BarycenterState.  Under the loss-increase rule this is the best
    state whose loss was measured before the loss stopped decreasing.
    """
    inputs = list(inputs)
    if not inputs:
        raise ValueError("need at least one input space")
    rho = _check_rho(rho, len(inputs))
    opts = opts or BaryOptions()
    solve = gw_solve or _default_gw_solve
    if opts.glue_rule == GlueRule.MAX_RULE:
        _check_max_rule(inputs, init)
    elif opts.gw.inner.method != OtMethod.EXACT and len(inputs) >= 3:
        raise ValueError("dense entropic plans need the max-rule gluing for "
                         "three or more inputs")
    if opts.first_pass_plans is not None \
            and len(opts.first_pass_plans) != len(inputs):
        raise ValueError("first_pass_plans must have one entry per input")

    def build_state(mu, plans, history, meltings, plan_log):
        return BarycenterState(
            inputs=tuple(inputs), melting=mu, rho=rho,
            loss_history=list(history), plans=list(plans),
            melting_history=list(meltings) if opts.keep_history else None,
            plans_history=[list(p) for p in plan_log] if opts.keep_history
            else None)

    space_y = init
    identity_first = _spaces_match(init, inputs[0])
    history = []
    losses = []
    states = []      # (melting, plans) per completed pass
    meltings, plan_log = [], []
    eq_tol = 1e-12

    for k in range(1, opts.max_outer + 1):
        plans, values = [], []
        for i, space_x in enumerate(inputs):
            if k == 1 and i == 0 and identity_first:
                plan = Coupling.identity(space_y.weights)
                val = gw_functional(space_y, space_x, plan)
            else:
                if k == 1:
                    warm = (opts.first_pass_plans[i]
                            if opts.first_pass_plans is not None else None)
                else:
                    warm = melting_plan(states[-1][0], i)
                res = solve(space_y, space_x, opts.gw, warm)
                plan, val = res.plan, res.value
            plans.append(plan)
            values.append(val)
        loss = float(np.dot(rho, np.square(values)))
        history.append((k, loss))
        losses.append(loss)

        if k >= 2:
            prev = losses[-2]
            slack = eq_tol * max(1.0, prev)
            if opts.stop == StopRule.LOSS_INCREASE and loss >= prev - slack:
                # no strict decrease: report the best measured state
                measured = losses[1:]
                best = int(np.argmin(measured))
                mu, st_plans = states[best]
                return build_state(mu, st_plans, history, meltings, plan_log)
            if opts.stop == StopRule.REL_TOL \
                    and abs(loss - prev) <= opts.rel_tol * max(prev, 1e-30):
                mu, st_plans = states[-1]
                return build_state(mu, st_plans, history, meltings, plan_log)

        if opts.glue_rule == GlueRule.MAX_RULE:
            _, mu = max_rule_without_replacement(plans, space_y.weights)
        else:
            mu = melt(glue_nw(plans, ref_weights=space_y.weights))
        states.append((mu, plans))
        if opts.keep_history:
            meltings.append(mu)
            plan_log.append(plans)
        space_y = mean_gauge(inputs, mu, rho)

        if opts.stop == StopRule.FIXED_ITERS and k >= opts.fixed_iters:
            return build_state(mu, plans, history, meltings, plan_log)

    warnings.warn(f"barycenter iteration stopped at max_outer={opts.max_outer} "
                  "without meeting the stop rule")
    if opts.stop == StopRule.LOSS_INCREASE and len(losses) >= 2:
        best = int(np.argmin(losses[1:]))
        mu, st_plans = states[best]
        return build_state(mu, st_plans, history, meltings, plan_log)
    mu, st_plans = states[-1]
    return build_state(mu, st_plans, history, meltings, plan_log)


def reweigh(state, rho):
    """Barycenter space at new coordinates; no solver runs, only the
    gauge changes."""
    rho = _check_rho(rho, len(state.inputs))
    return state.space(rho)


def lgw_matrix(inputs, mu, marginal_tol=1e-8):
    """Pairwise transport-mismatch surrogate read off one melting.

    Entry (i, j) evaluates the two-gauge functional at the (i, j)
    projection of ``mu``; it upper-bounds the true pairwise distance.
    """
    bad = mu.validate([s.weights for s in inputs], tol=marginal_tol)
    if bad:
        raise ValueError(f"melting infeasible: {'; '.join(bad)}")
    N = len(inputs)
    out = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            val = gw_functional(inputs[i], inputs[j], bimarginal(mu, i, j),
                                marginal_tol=marginal_tol)
            out[i, j] = out[j, i] = val
    return out


# ---------------------------------------------------------------------------
# Gaussian closed form


@dataclass(frozen=True, eq=False)
class GaussianSpace:
    """Centered Gaussian with the inner-product gauge."""

    covariance: np.ndarray
    eigvals: np.ndarray   # decreasing
    eigvecs: np.ndarray   # columns, matching eigvals
    signs: np.ndarray

    @property
    def dim(self):
        return self.covariance.shape[0]

    @classmethod
    def create(cls, covariance, signs=None):
        cov = np.asarray(covariance, dtype=np.float64)
        cov = np.atleast_2d(cov)
        scale = max(np.abs(cov).max(), 1.0)
        if cov.shape[0] != cov.shape[1] \
                or np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise ValueError("covariance must be symmetric")
        vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
        if vals.min() < -1e-10 * scale:
            raise ValueError("covariance is not positive semi-definite")
        order = np.argsort(-vals)
        vals = np.maximum(vals[order], 0.0)
        vecs = vecs[:, order]
        # deterministic eigenvector orientation
        for c in range(vecs.shape[1]):
            lead = np.argmax(np.abs(vecs[:, c]))
            if vecs[lead, c] < 0:
                vecs[:, c] = -vecs[:, c]
        d = cov.shape[0]
        s = np.ones(d, dtype=np.int64) if signs is None \
            else np.asarray(signs, dtype=np.int64)
        if s.shape != (d,) or not np.all(np.abs(s) == 1):
            raise ValueError("signs must be a +-1 vector of the dimension")
        return cls(covariance=cov, eigvals=vals, eigvecs=vecs, signs=s)


def _check_gaussians(gaussians):
    dims = [g.dim for g in gaussians]
    if any(dims[i] < dims[i + 1] for i in range(len(dims) - 1)):
        raise ValueError("dimensions must be sorted in decreasing order")
    for k, g in enumerate(gaussians):
        if g.eigvals.min() <= 0:
            raise ValueError(f"gaussian {k}: covariance must be positive "
                             "definite")
        if np.any(np.diff(g.eigvals) > 1e-12):
            raise ValueError(f"gaussian {k}: eigenvalues not sorted")
    return dims


def gaussian_multi_plan(gaussians, signs=None):
    """Closed-form jointly optimal correspondence maps between centered
    Gaussians with inner-product gauges.

    Returns the matrices A_i (d_i x d_1) acting in the eigenbases, i.e.
    the full maps are x -> P_i A_i P_1^T x, together with a report
    checking the pairwise composition identity B_{ij} A_i = A_j.
    """
    dims = _check_gaussians(gaussians)
    d1 = dims[0]
    if signs is None:
        signs = [g.signs for g in gaussians]
    amats = []
    for g, s in zip(gaussians, signs):
        s = np.asarray(s, dtype=np.float64)
        A = np.zeros((g.dim, d1))
        diag = s * np.sqrt(g.eigvals / gaussians[0].eigvals[:g.dim])
        A[np.arange(g.dim), np.arange(g.dim)] = diag
        amats.append(A)
    residuals = {}
    worst = 0.0
    for i in range(len(gaussians)):
        for j in range(i, len(gaussians)):
            di, dj = dims[i], dims[j]
            si = np.asarray(signs[i], dtype=np.float64)
            sj = np.asarray(signs[j], dtype=np.float64)
            B = np.zeros((dj, di))
            B[np.arange(dj), np.arange(dj)] = (
                sj * si[:dj] * np.sqrt(gaussians[j].eigvals
                                       / gaussians[i].eigvals[:dj]))
            res = float(np.abs(B @ amats[i] - amats[j]).max())
            residuals[(i, j)] = res
            worst = max(worst, res)
    report = {"max_residual": worst, "pair_residuals": residuals}
    return amats, report


def gaussian_map_matrices(gaussians, amats):
    """Ambient-coordinate maps T_i = P_i A_i P_1^T."""
    p1 = gaussians[0].eigvecs
    return [g.eigvecs @ A @ p1.T for g, A in zip(gaussians, amats)]


def gaussian_barycenter(gaussians, rho):
    """Closed-form barycenter of Gaussian spaces with inner-product gauges.

    Returns a d_1-dimensional Gaussian whose covariance (expressed in the
    eigenbasis of the first input) is the rho-mix of the zero-padded
    eigenvalue matrices.
    """
    dims = _check_gaussians(gaussians)
    rho = _check_rho(rho, len(gaussians))
    lam = np.zeros(dims[0])
    for w, g in zip(rho, gaussians):
        lam[:g.dim] += w * g.eigvals
    return GaussianSpace.create(np.diag(lam))


# ---------------------------------------------------------------------------
# state manifest


def save_state(state, directory, name="barycenter", input_paths=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mcoo = f"{name}.mcoo.tsv"
    save_multicoupling(state.melting, directory / mcoo)
    doc = {
        "rho": state.rho.tolist(),
        "melting": mcoo,
        "loss_history": [[int(k), float(v)] for k, v in state.loss_history],
        "inputs": (list(input_paths) if input_paths
                   else [s.label for s in state.inputs]),
    }
    path = directory / f"{name}.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return path


def load_state(manifest_path, spaces=None):
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        doc = json.load(fh)
    mu = load_multicoupling(manifest_path.parent / doc["melting"])
    if spaces is None:
        spaces = [load_space(manifest_path.parent / p) for p in doc["inputs"]]
    return BarycenterState(
        inputs=tuple(spaces), melting=mu,
        rho=np.asarray(doc["rho"], dtype=np.float64),
        loss_history=[(int(k), float(v)) for k, v in doc["loss_history"]],
        plans=[])
