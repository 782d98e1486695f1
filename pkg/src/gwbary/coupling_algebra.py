"""Gluing and melting of transport plans along a shared marginal.

Plans that share their first marginal can be glued into one joint plan
over (reference, X_1, ..., X_N) by sweeping the reference mass north-west
style through all plans simultaneously; dropping the reference axis of a
gluing ("melting") yields a multi-marginal plan between the X_i.  For
uniform same-size inputs a greedy argmax rounding ("maximum rule without
replacement") produces one-to-one correspondences instead.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ot_solvers import Coupling, MARGINAL_TOL


@dataclass(frozen=True, eq=False)
class MultiCoupling:
    """Sparse multi-marginal plan: index tuples with positive masses.

    ``tuples`` has shape (S, N) and is lexicographically sorted with no
    duplicate rows; masses are positive and sum to one.
    """

    sizes: tuple
    tuples: np.ndarray
    masses: np.ndarray

    @classmethod
    def create(cls, sizes, tuples, masses):
        """Canonicalize: merge duplicate tuples, drop zero masses, sort."""
        tuples = np.asarray(tuples, dtype=np.int64).reshape(-1, len(sizes))
        masses = np.asarray(masses, dtype=np.float64)
        uniq, inverse = np.unique(tuples, axis=0, return_inverse=True)
        merged = np.bincount(inverse, weights=masses, minlength=uniq.shape[0])
        keep = merged > 0
        return cls(tuple(int(s) for s in sizes), uniq[keep], merged[keep])

    @property
    def n_marginals(self):
        return len(self.sizes)

    @property
    def support_size(self):
        return self.tuples.shape[0]

    def marginal(self, i):
        return np.bincount(self.tuples[:, i], weights=self.masses,
                           minlength=self.sizes[i])

    def total_mass(self):
        return float(self.masses.sum())

    def validate(self, weights_list=None, tol=MARGINAL_TOL):
        report = []
        if np.any(self.masses <= 0):
            report.append("non-positive mass")
        if abs(self.total_mass() - 1.0) > tol:
            report.append(f"total mass {self.total_mass()!r} != 1")
        if self.tuples.shape[1] != self.n_marginals:
            report.append("tuple arity mismatch")
        if self.support_size and np.unique(self.tuples, axis=0).shape[0] \
                != self.support_size:
            report.append("duplicate tuples")
        if weights_list is not None:
            for i, w in enumerate(weights_list):
                if np.abs(self.marginal(i) - w).max() > tol:
                    report.append(f"marginal {i} mismatch")
        return report


# a gluing is a MultiCoupling whose axis 0 is the reference space
Gluing = MultiCoupling


def nw_corner_coupling(xi, ups):
    """Deterministic north-west corner plan for the given marginals."""
    xi = np.asarray(xi, dtype=np.float64)
    ups = np.asarray(ups, dtype=np.float64)
    if abs(xi.sum() - 1.0) > 1e-8 or abs(ups.sum() - 1.0) > 1e-8:
        raise ValueError("marginals must each sum to 1")
    rows, cols, masses = _kernels.nw_corner(xi, ups)
    return Coupling.coo(xi.shape[0], ups.shape[0], rows, cols, masses)


def _csr_by_row(plan):
    order = np.lexsort((plan.cols, plan.rows))
    rows, cols, masses = plan.rows[order], plan.cols[order], plan.masses[order]
    indptr = np.zeros(plan.n_rows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, cols, masses


def glue_nw(couplings, ref_weights=None):
    """Glue plans sharing their first marginal with a simultaneous NW sweep.

    Parameters
    ----------
    couplings : list of Coupling
        Plans whose row marginals agree (within 1e-12); rows index the
        shared reference space.
    ref_weights : array, optional
        The shared reference marginal; recomputed from the first plan
        when omitted.

    Returns
    -------
    MultiCoupling over (reference, X_1, ..., X_N) with support at most
    m + sum(support sizes) entries; projecting onto (reference, X_i)
    recovers each input plan exactly.
    """
    if not couplings:
        raise ValueError("need at least one coupling to glue")
    m = couplings[0].n_rows
    ref = (np.asarray(ref_weights, dtype=np.float64) if ref_weights is not None
           else couplings[0].row_marginal())
    for k, plan in enumerate(couplings):
        if plan.n_rows != m:
            raise ValueError(f"coupling {k} has reference size {plan.n_rows}, "
                             f"expected {m}")
        if np.abs(plan.row_marginal() - ref).max() > 1e-12:
            raise ValueError(f"coupling {k} disagrees on the shared marginal")
    N = len(couplings)
    indptr = np.empty((N, m + 1), dtype=np.int64)
    cols_parts, mass_parts, offs = [], [], [0]
    for i, plan in enumerate(couplings):
        ptr, cols, masses = _csr_by_row(plan)
        indptr[i] = ptr
        cols_parts.append(cols)
        mass_parts.append(masses)
        offs.append(offs[-1] + cols.shape[0])
    cap = m + offs[-1] + 1
    tuples, masses = _kernels.glue_sweep(
        ref, indptr, np.concatenate(cols_parts),
        np.concatenate(mass_parts), np.array(offs, dtype=np.int64), cap)
    tuples, masses = _absorb_tiny(tuples, masses)
    sizes = (m,) + tuple(plan.n_cols for plan in couplings)
    return MultiCoupling.create(sizes, tuples, masses)


def _absorb_tiny(tuples, masses, threshold=1e-15):
    """Drop splits below ``threshold``, re-adding their mass to the largest
    split of the same reference atom."""
    tiny = masses < threshold
    if not tiny.any():
        return tuples, masses
    masses = masses.copy()
    for r in np.unique(tuples[tiny, 0]):
        sel = tuples[:, 0] == r
        lost = masses[sel & tiny].sum()
        big = np.flatnonzero(sel & ~tiny)
        if big.size:
            masses[big[np.argmax(masses[big])]] += lost
    return tuples[~tiny], masses[~tiny]


def melt(gluing):
    """Drop the reference axis of a gluing, merging coinciding tuples."""
    return MultiCoupling.create(gluing.sizes[1:], gluing.tuples[:, 1:],
                                gluing.masses)


def project_pair(gluing, axis_a, axis_b):
    """Bi-marginal projection of a multi-coupling onto two of its axes."""
    if axis_a == axis_b:
        raise ValueError("projection axes must differ")
    for ax in (axis_a, axis_b):
        if not 0 <= ax < gluing.n_marginals:
            raise ValueError(f"axis {ax} out of range")
    return Coupling.coo(gluing.sizes[axis_a], gluing.sizes[axis_b],
                        gluing.tuples[:, axis_a], gluing.tuples[:, axis_b],
                        gluing.masses)


def bimarginal(mu, i, j):
    """Projection of a multi-marginal plan onto marginals (i, j)."""
    return project_pair(mu, i, j)


def max_rule_without_replacement(couplings, ref_weights):
    """Round plans to one-to-one correspondences by greedy argmax.

    Requires every space (and the reference) to have the same size m and
    uniform weights.  For each plan, columns are visited in index order
    and assigned the not-yet-taken reference point maximizing
    plan(y, x) / ref(y); ties break to the lowest reference index.  A
    column with no positive mass among the free reference points falls
    back to the lowest free index (with a warning).

    Returns
    -------
    maps : list of int arrays, maps[i][x] = assigned reference index
    mu : MultiCoupling over the X_i with m tuples of mass 1/m
    """
    ref = np.asarray(ref_weights, dtype=np.float64)
    m = ref.shape[0]
    if np.abs(ref - 1.0 / m).max() > 1e-12:
        raise ValueError("max rule requires uniform reference weights")
    for k, plan in enumerate(couplings):
        if plan.n_rows != m or plan.n_cols != m:
            raise ValueError(f"coupling {k} is not {m}x{m}")
        if np.abs(plan.col_marginal() - 1.0 / m).max() > 1e-10:
            raise ValueError(f"coupling {k} does not have uniform weights")
    maps = []
    tuples = np.empty((m, len(couplings)), dtype=np.int64)
    for k, plan in enumerate(couplings):
        ratio = plan.dense() / ref[:, None]
        T, fallbacks = _kernels.max_rule_assign(ratio)
        if fallbacks:
            warnings.warn(f"max rule: {fallbacks} column(s) of coupling {k} "
                          "had no mass on free reference points")
        maps.append(T)
        inv = np.empty(m, dtype=np.int64)
        inv[T] = np.arange(m)
        tuples[:, k] = inv  # tuple for reference y: (T_1^-1(y), ...)
    return maps, MultiCoupling.create(
        tuple(plan.n_cols for plan in couplings), tuples, np.full(m, 1.0 / m))


# ---------------------------------------------------------------------------
# mcoo-tsv files


def save_multicoupling(mu, path):
    with open(path, "w") as fh:
        fh.write(str(mu.n_marginals) + " "
                 + " ".join(str(s) for s in mu.sizes) + "\n")
        for tup, w in zip(mu.tuples, mu.masses):
            fh.write("\t".join(str(t) for t in tup) + f"\t{w!r}\n")


def load_multicoupling(path):
    with open(path) as fh:
        head = fh.readline().split()
        n_marg = int(head[0])
        sizes = tuple(int(s) for s in head[1:1 + n_marg])
        tuples, masses = [], []
        for line in fh:
            if not line.strip():
                continue
            parts = line.split("\t")
            tuples.append([int(t) for t in parts[:n_marg]])
            masses.append(float(parts[n_marg]))
    return MultiCoupling.create(sizes, np.array(tuples, dtype=np.int64),
                                np.array(masses))
