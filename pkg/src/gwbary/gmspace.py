"""Finite gauged measure spaces.

A space bundles a symmetric pairwise gauge matrix with a probability vector
over its support, plus optional ambient coordinates.  Constructors cover
point clouds (several gauge flavours), weighted graphs (shortest-path or
symmetrized-adjacency gauges) and triangle meshes (edge-length graphs).
"""

import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra
from scipy.spatial.distance import cdist, pdist, squareform

WEIGHT_TOL = 1e-12


class GaugeKind(Enum):
    SQ_EUCLID = "sq-euclid"
    EUCLID = "euclid"
    ONE_NORM = "one-norm"
    INNER_PRODUCT = "inner-product"
    DIJKSTRA_SQ = "dijkstra-sq"
    DIJKSTRA = "dijkstra"
    CUSTOM = "custom"


_POINT_KINDS = (
    GaugeKind.SQ_EUCLID, GaugeKind.EUCLID, GaugeKind.ONE_NORM,
    GaugeKind.INNER_PRODUCT,
)
_GRAPH_KINDS = (GaugeKind.DIJKSTRA, GaugeKind.DIJKSTRA_SQ, GaugeKind.CUSTOM)


@dataclass(frozen=True, eq=False)
class GmSpace:
    """A finite space with a symmetric gauge and probability weights.

    Instances are immutable; all solver code treats them as shared
    read-only inputs.
    """

    gauge: np.ndarray
    weights: np.ndarray
    coords: np.ndarray | None = None
    label: str = ""
    kind: GaugeKind | None = None

    @property
    def n(self):
        return self.gauge.shape[0]

    def __repr__(self):
        lab = f" {self.label!r}" if self.label else ""
        return f"<GmSpace n={self.n}{lab}>"


def uniform_weights(n):
    return np.full(n, 1.0 / n)


def _as_weights(n, weights):
    if weights is None:
        return uniform_weights(n)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"weights must have length {n}, got shape {w.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-8:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    return w / w.sum()


def from_points(coords, kind=GaugeKind.SQ_EUCLID, weights=None, label=""):
    """Build a space from ambient coordinates.

    Parameters
    ----------
    coords : array-like, shape (n, d)
        Point coordinates.
    kind : GaugeKind
        One of SQ_EUCLID, EUCLID, ONE_NORM, INNER_PRODUCT.
    weights : array-like, shape (n,), optional
        Probability weights; uniform when omitted.

    Returns
    -------
    GmSpace
    """
    pts = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("coords must be a nonempty (n, d) array")
    if not np.isfinite(pts).all():
        raise ValueError("coords contain non-finite values")
    if kind not in _POINT_KINDS:
        raise ValueError(f"gauge kind {kind} is not a point-cloud kind")
    if kind == GaugeKind.SQ_EUCLID:
        gauge = squareform(pdist(pts, "sqeuclidean")) if pts.shape[0] > 1 \
            else np.zeros((1, 1))
    elif kind == GaugeKind.EUCLID:
        gauge = cdist(pts, pts)
    elif kind == GaugeKind.ONE_NORM:
        gauge = cdist(pts, pts, "cityblock")
    else:
        gauge = pts @ pts.T
    gauge = 0.5 * (gauge + gauge.T)
    w = _as_weights(pts.shape[0], weights)
    return GmSpace(gauge=gauge, weights=w, coords=pts, label=label, kind=kind)


def from_graph(n_nodes, edges, kind=GaugeKind.DIJKSTRA, weights=None, label=""):
    """Build a space from a weighted graph.

    Parameters
    ----------
    n_nodes : int
        Node count; nodes are 0..n_nodes-1.
    edges : iterable of (u, v, w)
        Edge list.  For the Dijkstra kinds the graph is treated as
        undirected and must be connected; for CUSTOM the (possibly
        directed) weighted adjacency matrix is symmetrized to
        (M + M^T) / 2 and used as the gauge directly.
    kind : GaugeKind
        DIJKSTRA, DIJKSTRA_SQ, or CUSTOM.
    """
    if n_nodes < 1:
        raise ValueError("graph needs at least one node")
    if kind not in _GRAPH_KINDS:
        raise ValueError(f"gauge kind {kind} is not a graph kind")
    edges = list(edges)
    adj = np.zeros((n_nodes, n_nodes))
    for u, v, w in edges:
        u, v, w = int(u), int(v), float(w)
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise ValueError(f"edge ({u}, {v}) out of range")
        if w < 0:
            raise ValueError("negative edge weights are not supported")
        adj[u, v] = w
    if kind == GaugeKind.CUSTOM:
        gauge = 0.5 * (adj + adj.T)
    else:
        sym = np.maximum(adj, adj.T)
        rows, cols = np.nonzero(sym)
        graph = coo_matrix((sym[rows, cols], (rows, cols)),
                           shape=(n_nodes, n_nodes)).tocsr()
        dist = _csgraph_dijkstra(graph, directed=False)
        if not np.isfinite(dist).all():
            raise ValueError("graph is disconnected: some node pair is unreachable")
        gauge = dist ** 2 if kind == GaugeKind.DIJKSTRA_SQ else dist
        gauge = 0.5 * (gauge + gauge.T)
    w = _as_weights(n_nodes, weights)
    return GmSpace(gauge=gauge, weights=w, label=label, kind=kind)


def normalize_diameter(space):
    """Rescale the gauge so its largest absolute entry is one."""
    peak = np.abs(space.gauge).max()
    if peak <= 0:
        raise ValueError("cannot normalize an all-zero gauge")
    return replace(space, gauge=space.gauge / peak)


def validate(space):
    """Check the space invariants; returns a list of violation messages."""
    report = []
    g, w = space.gauge, space.weights
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        report.append("gauge not square")
        return report
    if not np.isfinite(g).all():
        report.append("gauge has non-finite entries")
    elif np.abs(g - g.T).max() > 0:
        report.append("gauge asymmetric")
    if w.shape != (g.shape[0],):
        report.append("weights length mismatch")
    else:
        if np.any(w < 0):
            report.append("weights negative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            report.append("weights not normalized")
    if space.coords is not None and space.coords.shape[0] != g.shape[0]:
        report.append("coords row count mismatch")
    return report


# ---------------------------------------------------------------------------
# mesh input (ASCII OFF / OBJ, triangular faces)


def load_off(path):
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise ValueError(f"{path}: not an ASCII OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos:pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        cnt = int(tokens[pos])
        if cnt != 3:
            raise ValueError(f"{path}: only triangular faces are supported")
        faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
        pos += 1 + cnt
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3)


def load_obj(path):
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:]]
                if len(idx) != 3:
                    raise ValueError(f"{path}: only triangular faces are supported")
                faces.append(idx)
    if not verts:
        raise ValueError(f"{path}: no vertices found")
    return (np.array(verts, dtype=np.float64),
            np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_off(path, verts, faces):
    verts = np.atleast_2d(np.asarray(verts, dtype=np.float64))
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3) if len(faces) \
        else np.zeros((0, 3), dtype=np.int64)
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{verts.shape[0]} {faces.shape[0]} 0\n")
        for v in verts:
            fh.write(" ".join(repr(float(x)) for x in v) + "\n")
        for f in faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def mesh_edges(verts, faces):
    """Unique undirected face edges with their Euclidean lengths."""
    pairs = set()
    for a, b, c in np.asarray(faces, dtype=np.int64):
        for u, v in ((a, b), (b, c), (a, c)):
            pairs.add((min(u, v), max(u, v)))
    edges = []
    for u, v in sorted(pairs):
        edges.append((u, v, float(np.linalg.norm(verts[u] - verts[v]))))
    return edges


def from_mesh(verts, faces, kind=GaugeKind.DIJKSTRA, weights=None, label=""):
    """Space from a triangle mesh: shortest-path gauge over face edges."""
    if kind not in (GaugeKind.DIJKSTRA, GaugeKind.DIJKSTRA_SQ):
        raise ValueError("mesh spaces use a Dijkstra gauge kind")
    space = from_graph(len(verts), mesh_edges(verts, faces), kind=kind,
                       weights=weights, label=label)
    return replace(space, coords=np.asarray(verts, dtype=np.float64))


def load_mesh(path, kind=GaugeKind.DIJKSTRA, weights=None, label=""):
    """Read an OFF/OBJ file; returns (space, faces)."""
    path = str(path)
    if path.lower().endswith(".obj"):
        verts, faces = load_obj(path)
    else:
        verts, faces = load_off(path)
    return from_mesh(verts, faces, kind=kind, weights=weights,
                     label=label or path), faces


# ---------------------------------------------------------------------------
# edge-list graph files:  one "u v w" line per edge, '#' comments


def load_edge_list(path, weights_path=None, kind=GaugeKind.DIJKSTRA, label=""):
    edges = []
    n = 0
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            u, v = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) > 2 else 1.0
            edges.append((u, v, w))
            n = max(n, u + 1, v + 1)
    weights = None
    if weights_path is not None:
        weights = np.loadtxt(weights_path, dtype=np.float64).reshape(-1)
        weights = weights / weights.sum()
        n = max(n, weights.shape[0])
    return from_graph(n, edges, kind=kind, weights=weights, label=label)


# ---------------------------------------------------------------------------
# gmspace-json


def save_space(space, path, coords_only=False):
    """Write a space as JSON.

    With ``coords_only`` the gauge matrix is omitted and regenerated from
    the stored coordinates and gauge kind on load; this requires the
    gauge to be exactly the one its kind produces (no rescaling applied).
    """
    doc = {"n": space.n, "weights": space.weights.tolist(), "label": space.label}
    if space.kind is not None:
        doc["gauge_kind"] = space.kind.value
    if space.coords is not None:
        doc["coords"] = space.coords.tolist()
    if not coords_only:
        doc["gauge"] = space.gauge.tolist()
    elif space.coords is None or space.kind not in _POINT_KINDS:
        raise ValueError("coords_only requires coords and a point-cloud kind")
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_space(path):
    with open(path) as fh:
        doc = json.load(fh)
    n = int(doc["n"])
    weights = np.asarray(doc["weights"], dtype=np.float64)
    label = doc.get("label", "")
    kind = GaugeKind(doc["gauge_kind"]) if "gauge_kind" in doc else None
    coords = (np.asarray(doc["coords"], dtype=np.float64)
              if "coords" in doc else None)
    if "gauge" in doc:
        gauge = np.asarray(doc["gauge"], dtype=np.float64).reshape(n, n)
        return GmSpace(gauge=gauge, weights=weights, coords=coords,
                       label=label, kind=kind)
    if coords is None or kind is None:
        raise ValueError(f"{path}: neither gauge nor coords+gauge_kind present")
    space = from_points(coords, kind=kind, weights=weights, label=label)
    return space
