"""k-means and clustering quality metrics (ACC, NMI, ARI, macro-F1)."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError, ParameterError
from .tensor import as_matrix, squared_distances

MAX_LLOYD_ITERS = 300


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(x, centers):
    labels = None
    for _ in range(MAX_LLOYD_ITERS):
        d2 = squared_distances(x, centers)
        new = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                # empty cluster: move it onto the point worst served by its center
                far = int(np.argmax(d2[np.arange(len(x)), labels]))
                centers[j] = x[far]
                labels[far] = j
                d2[far] = 0.0
    d2 = squared_distances(x, centers)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(x)), labels].sum())
    return centers, labels, inertia


def kmeans(x, k: int, restarts: int = 20, seed: int = 0):
    """Lloyd's algorithm from k-means++ seeds; the lowest-inertia restart wins.

    Returns ``(centers, labels, inertia)``.
    """
    x = as_matrix(x)
    if not 1 <= k <= x.shape[0]:
        raise ParameterError(f"k={k} must be in [1, {x.shape[0]}]")
    if restarts < 1:
        raise ParameterError("need at least one restart")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        res = _lloyd(x, _kmeans_pp(x, k, rng))
        if best is None or res[2] < best[2]:
            best = res
    return best


def _check_pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise DimensionError(f"{pred.size} predictions vs {truth.size} labels")
    if pred.size == 0:
        raise ParameterError("empty partition")
    return pred, truth


def contingency(pred, truth):
    """Counts table with rows = predicted clusters, columns = classes."""
    pred, truth = _check_pair(pred, truth)
    pu, pi = np.unique(pred, return_inverse=True)
    tu, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pu.size, tu.size), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table, pu, tu


def _pair_f1(table):
    return 2.0 * table / (table.sum(axis=1, keepdims=True) + table.sum(axis=0, keepdims=True))


def _assign(table):
    """Assignment maximising matched samples; ties go to the larger F1 sum.

    The F1 sum is below the number of classes, so scaling it by
    ``1 / (classes + 1)`` keeps it from outweighing a single matched sample.
    The optimum then does not depend on how the ids are numbered.
    """
    score = table + _pair_f1(table) / (table.shape[1] + 1)
    return linear_sum_assignment(score, maximize=True)


def best_mapping(pred, truth) -> dict:
    """Predicted id -> class id maximising the number of matched samples.

    Solved as an assignment problem on the contingency table; when there are
    more clusters than classes some clusters stay unmapped.
    """
    table, pu, tu = contingency(pred, truth)
    rows, cols = _assign(table)
    return {pu[r].item(): tu[c].item() for r, c in zip(rows, cols)}


def apply_mapping(pred, mapping: dict, missing=-1) -> np.ndarray:
    return np.array([mapping.get(p.item(), missing) for p in np.asarray(pred).ravel()])


def accuracy(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth)
    mapped = apply_mapping(pred, best_mapping(pred, truth))
    return float(np.mean(mapped == truth))


def macro_f1(pred, truth) -> float:
    """F1 per class after the best mapping, averaged over classes.

    A class that no cluster maps onto scores 0.
    """
    table, _, _ = contingency(pred, truth)
    rows, cols = _assign(table)
    # per pair F1 = 2 tp / (cluster size + class size)
    return float(_pair_f1(table)[rows, cols].sum() / table.shape[1])


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table, _, _ = contingency(pred, truth)
    n = table.sum()
    if table.shape[0] == 1 and table.shape[1] == 1:
        return 1.0
    if table.shape[0] == table.shape[1] and np.all((table > 0).sum(axis=0) == 1) and np.all((table > 0).sum(axis=1) == 1):
        return 1.0
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    nz = np.nonzero(table)
    nij = table[nz].astype(np.float64)
    mi = float(np.sum(nij / n * np.log(n * nij / (a[nz[0]] * b[nz[1]]))))
    denom = 0.5 * (_entropy(a, n) + _entropy(b, n))
    if denom <= 0:
        return 0.0
    return float(min(max(mi / denom, 0.0), 1.0))


def _comb2(x):
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def ari(pred, truth) -> float:
    table, _, _ = contingency(pred, truth)
    n = int(table.sum())
    index = int(_comb2(table).sum())
    sa = int(_comb2(table.sum(axis=1)).sum())
    sb = int(_comb2(table.sum(axis=0)).sum())
    total = n * (n - 1) // 2
    if total == 0:
        return 1.0
    expected = sa * sb / total
    max_index = 0.5 * (sa + sb)
    if max_index == expected:
        # only reachable when both partitions are trivial in the same way
        return 1.0
    return float((index - expected) / (max_index - expected))


def evaluate(pred, truth) -> dict:
    return {
        "acc": accuracy(pred, truth),
        "nmi": nmi(pred, truth),
        "ari": ari(pred, truth),
        "f1": macro_f1(pred, truth),
    }
