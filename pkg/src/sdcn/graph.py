"""KNN graph construction, edge-list loading and symmetric normalisation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, ParameterError
from .tensor import as_matrix


@dataclass(frozen=True)
class SparseGraph:
    """Undirected unweighted graph on ``n`` nodes.

    ``edges`` is an (m, 2) integer array of pairs ``i < j`` sorted
    lexicographically; self-loops are never stored.
    """

    n: int
    edges: np.ndarray
    _norm: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            lo = np.minimum(e[:, 0], e[:, 1])
            hi = np.maximum(e[:, 0], e[:, 1])
            keep = lo != hi
            e = np.unique(np.stack([lo[keep], hi[keep]], axis=1), axis=0)
            if e.size and (e.min() < 0 or e.max() >= self.n):
                raise ParameterError(f"edge index out of range for n={self.n}")
        object.__setattr__(self, "edges", e)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> sp.csr_matrix:
        """Raw symmetric A without self-loops."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        data = np.ones(rows.size)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n)

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency()
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    @property
    def normalized(self) -> sp.csr_matrix:
        if "a_hat" not in self._norm:
            self._norm["a_hat"] = normalize_adjacency(self)
        return self._norm["a_hat"]


def heat_kernel_similarity(x, t: float) -> np.ndarray:
    if t <= 0:
        raise ParameterError(f"heat kernel time must be positive, got {t}")
    x = as_matrix(x)
    sq = np.sum(x * x, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
    np.fill_diagonal(d2, 0.0)
    s = np.exp(-d2 / t)
    return 0.5 * (s + s.T)


def mean_squared_distance(x) -> float:
    """Mean of ||x_i - x_j||^2 over ordered pairs i != j."""
    x = as_matrix(x)
    n = x.shape[0]
    if n < 2:
        return 1.0
    centered = x - x.mean(axis=0)
    # sum_{i,j} ||x_i - x_j||^2 = 2 n sum_i ||x_i - mean||^2
    total = 2.0 * n * np.sum(centered * centered)
    return float(total / (n * (n - 1)))


def dot_product_similarity(x) -> np.ndarray:
    x = as_matrix(x)
    return x @ x.T


def is_binary(x) -> bool:
    x = np.asarray(x)
    return bool(np.all((x == 0) | (x == 1)))


def similarity(x, kind: str = "auto", t: float | None = None) -> np.ndarray:
    """Heat kernel for continuous data, dot product for binary data."""
    if kind == "auto":
        kind = "dot" if is_binary(x) else "heat"
    if kind == "heat":
        return heat_kernel_similarity(x, t if t is not None else mean_squared_distance(x))
    if kind == "dot":
        return dot_product_similarity(x)
    raise ParameterError(f"unknown similarity {kind!r}")


def build_knn_graph(s, k: int) -> SparseGraph:
    """Link every node to its ``k`` most similar other nodes, symmetrised by union.

    Ties are broken towards the lower node index.
    """
    s = as_matrix(s)
    n = s.shape[0]
    if s.shape != (n, n):
        raise ParameterError(f"similarity matrix must be square, got {s.shape}")
    if not 1 <= k < n:
        raise ParameterError(f"k={k} must satisfy 1 <= k < N={n}")
    edges = []
    idx = np.arange(n)
    for i in range(n):
        row = s[i].copy()
        row[i] = -np.inf
        # stable sort on -s keeps lower indices first among equal similarities
        order = np.argsort(-row, kind="stable")
        nbrs = order[:k]
        edges.append(np.stack([np.full(k, i), idx[nbrs]], axis=1))
    return SparseGraph(n, np.concatenate(edges))


def normalize_adjacency(g: SparseGraph) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 as CSR with sorted indices."""
    a = g.adjacency() + sp.identity(g.n, format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / np.sqrt(deg))
    out = sp.csr_matrix(inv @ a @ inv)
    out.sort_indices()
    return out


def load_edge_list(path, n: int) -> SparseGraph:
    """Read 0-based ``i j`` pairs; '#' starts a comment, blank lines are skipped."""
    pairs = []
    with open(Path(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-integer node id") from None
            if not (0 <= i < n and 0 <= j < n):
                raise FormatError(f"{path}:{lineno}: node id out of range [0, {n})")
            pairs.append((i, j))
    return SparseGraph(n, np.array(pairs, dtype=np.int64).reshape(-1, 2))


def write_edge_list(g: SparseGraph, path) -> None:
    with open(Path(path), "w") as fh:
        for i, j in g.edges:
            fh.write(f"{i} {j}\n")


def random_graph(n: int, p: float, rng: np.random.Generator) -> SparseGraph:
    """Erdos-Renyi graph on ``n`` nodes with edge probability ``p``."""
    upper = np.triu(rng.random((n, n)) < p, 1)
    i, j = np.nonzero(upper)
    return SparseGraph(n, np.stack([i, j], axis=1))
