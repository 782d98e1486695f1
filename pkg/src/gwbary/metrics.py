"""Evaluation metrics for matching and classification experiments."""

import json

import numpy as np


def node_correctness(mu, ground_truth):
    """Fractions of support tuples with at least one / all pairs correct.

    Parameters
    ----------
    mu : MultiCoupling
        Matching encoded in the support tuples.
    ground_truth : dict
        Maps (i, j) -> integer array T with T[a] = b meaning node a of
        marginal i corresponds to node b of marginal j.  Missing
        directions are inferred from the inverse map.

    Returns
    -------
    (nc1, nc_all) with denominators equal to the support size.
    """
    N = mu.n_marginals
    maps = {}
    for (i, j), t in ground_truth.items():
        t = np.asarray(t, dtype=np.int64)
        maps[(i, j)] = t
        if (j, i) not in ground_truth:
            inv = np.empty_like(t)
            inv[t] = np.arange(t.shape[0])
            maps[(j, i)] = inv
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    for pair in pairs:
        if pair not in maps:
            raise KeyError(f"ground truth missing for pair {pair}")
    hit_any = np.zeros(mu.support_size, dtype=bool)
    hit_all = np.ones(mu.support_size, dtype=bool)
    for i, j in pairs:
        ok = maps[(i, j)][mu.tuples[:, i]] == mu.tuples[:, j]
        hit_any |= ok
        hit_all &= ok
    denom = mu.support_size
    return float(hit_any.sum()) / denom, float(hit_all.sum()) / denom


def nn_confusion(distance_matrix, labels, iterations=10000, seed=0):
    """Monte-Carlo nearest-representative confusion matrix.

    Each round draws one random representative per class and assigns
    every item to the class of its nearest representative (ties broken
    uniformly at random).  Counts are normalized by the iteration count
    and the class sizes, so rows sum to one.

    Parameters
    ----------
    distance_matrix : (N, N) symmetric array
    labels : length-N sequence of hashable class labels
    iterations : int
    seed : int

    Returns
    -------
    (classes, matrix): the sorted class labels and the confusion matrix.
    """
    dist = np.asarray(distance_matrix, dtype=np.float64)
    labels = list(labels)
    if dist.shape[0] != len(labels):
        raise ValueError("labels length does not match the matrix")
    if np.abs(dist - dist.T).max() > 1e-9:
        raise ValueError("distance matrix must be symmetric")
    classes = sorted(set(labels), key=str)
    members = {c: np.flatnonzero([l == c for l in labels]) for c in classes}
    for c, idx in members.items():
        if idx.size == 0:
            raise ValueError(f"class {c!r} has no members")
    class_of = np.array([classes.index(l) for l in labels])
    counts = np.zeros((len(classes), len(classes)))
    for it in range(iterations):
        rng = np.random.default_rng((seed, it))
        reps = np.array([rng.choice(members[c]) for c in classes])
        d = dist[:, reps]
        winners = np.empty(len(labels), dtype=np.int64)
        for item in range(len(labels)):
            row = d[item]
            near = np.flatnonzero(row == row.min())
            winners[item] = near[0] if near.size == 1 \
                else rng.choice(near)
        np.add.at(counts, (class_of, winners), 1.0)
    sizes = np.array([members[c].size for c in classes], dtype=np.float64)
    return classes, counts / (iterations * sizes[:, None])


def mre_pcc(reference, approx):
    """Mean relative error and Pearson correlation of two distance matrices.

    The MRE averages |approx - ref| / ref over the off-diagonal entries
    where the reference is nonzero; the correlation is computed on the
    strict upper triangles.
    """
    ref = np.asarray(reference, dtype=np.float64)
    app = np.asarray(approx, dtype=np.float64)
    if ref.shape != app.shape:
        raise ValueError("matrices must have the same shape")
    iu = np.triu_indices(ref.shape[0], k=1)
    r, a = ref[iu], app[iu]
    nz = r != 0
    if not nz.any():
        raise ValueError("all reference entries are zero")
    mre = float(np.mean(np.abs(a[nz] - r[nz]) / r[nz]))
    # degenerate (constant) vectors have undefined correlation; call two
    # constants perfectly correlated, a constant against a varying one not
    if r.std() == 0 or a.std() == 0:
        pcc = 1.0 if r.std() == a.std() == 0 else 0.0
    else:
        pcc = float(np.corrcoef(r, a)[0, 1])
    return mre, pcc


def save_metrics(path, nc1=None, nc_all=None, confusion=None, mre=None,
                 pcc=None, extra=None):
    doc = {}
    if nc1 is not None:
        doc["nc1"] = nc1
    if nc_all is not None:
        doc["nc_all"] = nc_all
    if confusion is not None:
        doc["confusion"] = np.asarray(confusion).tolist()
    if mre is not None:
        doc["mre"] = mre
    if pcc is not None:
        doc["pcc"] = pcc
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return doc
