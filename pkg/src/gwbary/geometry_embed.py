"""Explicit embeddings for barycenters of Euclidean-gauged inputs.

When every input space carries coordinates with a 1-norm, squared
Euclidean, or inner-product gauge, the barycenter embeds into the product
space by per-block rescaling (rho for the 1-norm, sqrt(rho) otherwise);
the pairwise gauge of the embedded points then reproduces the mean gauge
exactly.  PCA projection and mesh face transfer turn that embedding into
displayable geometry.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .gmspace import GaugeKind
from .barycenter import mean_gauge


@dataclass
class EmbeddedBarycenter:
    points: np.ndarray            # (K, sum d_i)
    masses: np.ndarray
    faces: np.ndarray | None = None
    pca_residual: float = 0.0
    diameter: float = 0.0


_SCALE_SQRT = (GaugeKind.SQ_EUCLID, GaugeKind.INNER_PRODUCT)
_EMBED_KINDS = _SCALE_SQRT + (GaugeKind.ONE_NORM,)


def euclid_embed(state, rho=None, kind=GaugeKind.SQ_EUCLID, verify=False,
                 verify_tol=1e-9):
    """Embed a barycenter state into the concatenated coordinate space.

    Parameters
    ----------
    state : BarycenterState
        Every input must carry coordinates, all with the same gauge kind.
    rho : simplex weights, optional
        Defaults to the state's own coordinates.
    kind : GaugeKind
        ONE_NORM, SQ_EUCLID, or INNER_PRODUCT; must match the inputs.
    verify : bool
        Recompute the pairwise gauge of the embedded points and raise if
        it deviates from the mean gauge by more than ``verify_tol``.

    Returns
    -------
    EmbeddedBarycenter with the block-scaled points, the melting masses,
    and the Euclidean diameter of the embedded cloud.
    """
    if kind not in _EMBED_KINDS:
        raise ValueError(f"gauge kind {kind} has no Euclidean embedding")
    rho = np.asarray(state.rho if rho is None else rho, dtype=np.float64)
    mu = state.melting
    blocks = []
    for i, space in enumerate(state.inputs):
        if space.coords is None:
            raise ValueError(f"input {i} has no coordinates")
        if space.kind is not None and space.kind != kind:
            raise ValueError(f"input {i} carries gauge kind "
                             f"{space.kind}, expected {kind}")
        scale = rho[i] if kind == GaugeKind.ONE_NORM else np.sqrt(rho[i])
        blocks.append(scale * space.coords[mu.tuples[:, i]])
    points = np.hstack(blocks)
    diameter = float(pdist(points).max()) if points.shape[0] > 1 else 0.0
    if verify:
        _verify_gauge(points, state, rho, kind, verify_tol)
    return EmbeddedBarycenter(points=points, masses=mu.masses.copy(),
                              diameter=diameter)


def _verify_gauge(points, state, rho, kind, tol):
    if kind == GaugeKind.ONE_NORM:
        from scipy.spatial.distance import squareform
        got = squareform(pdist(points, "cityblock")) if points.shape[0] > 1 \
            else np.zeros((1, 1))
    elif kind == GaugeKind.SQ_EUCLID:
        from scipy.spatial.distance import squareform
        got = squareform(pdist(points, "sqeuclidean")) if points.shape[0] > 1 \
            else np.zeros((1, 1))
    else:
        got = points @ points.T
    want = mean_gauge(state.inputs, state.melting, rho).gauge
    dev = np.abs(got - want).max()
    if dev > tol:
        raise AssertionError(f"embedded gauge deviates from the mean gauge "
                             f"by {dev:.3e}")


def pca_project(points, target_dim=3):
    """Project onto the best-fitting affine subspace of given dimension.

    Returns the projected coordinates (centered, expressed in the top
    principal directions, zero-padded if the input has fewer dimensions)
    and the residual, i.e. the mean Euclidean displacement between the
    original points and their reconstructions.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if not np.isfinite(pts).all():
        raise ValueError("points contain non-finite values")
    k, d = pts.shape
    centered = pts - pts.mean(axis=0)
    dim = min(target_dim, d)
    if k == 1:
        return np.zeros((1, target_dim)), 0.0
    cov = centered.T @ centered / k
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(-vals)[:dim]
    basis = vecs[:, order]
    proj = centered @ basis
    recon = proj @ basis.T
    residual = float(np.linalg.norm(centered - recon, axis=1).mean())
    if dim < target_dim:
        proj = np.hstack([proj, np.zeros((k, target_dim - dim))])
    return proj, residual


def transfer_faces(state, anchor_index, faces):
    """Lift mesh faces of one input onto the barycenter support.

    A triple of support tuples becomes a face whenever their components
    at ``anchor_index`` form a face of that input.  If the melting visits
    each anchor vertex exactly once, the face count is preserved.
    """
    if not 0 <= anchor_index < len(state.inputs):
        raise ValueError(f"anchor index {anchor_index} out of range")
    comp = state.melting.tuples[:, anchor_index]
    where = {}
    for s, c in enumerate(comp):
        where.setdefault(int(c), []).append(s)
    out = []
    for face in np.asarray(faces, dtype=np.int64).reshape(-1, 3):
        u, v, w = (where.get(int(x), ()) for x in face)
        for a in u:
            for b in v:
                for c in w:
                    out.append((a, b, c))
    return np.array(out, dtype=np.int64).reshape(-1, 3)
