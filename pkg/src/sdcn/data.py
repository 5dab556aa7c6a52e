"""Dataset bundles on disk, synthetic generators and metric tables.

A dataset directory holds ``features.csv`` (one sample per row, no header),
optionally ``labels.txt`` (one integer per line) and ``edges.txt`` (an edge
list, see :func:`sdcn.graph.load_edge_list`).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .graph import SparseGraph, build_knn_graph, load_edge_list, similarity, write_edge_list

FEATURES = "features.csv"
LABELS = "labels.txt"
EDGES = "edges.txt"


@dataclass
class DatasetBundle:
    features: np.ndarray
    labels: np.ndarray | None = None
    graph: SparseGraph | None = None
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        n = self.features.shape[0]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if self.labels.size != n:
                raise FormatError(f"{self.labels.size} labels for {n} samples")
        if self.graph is not None and self.graph.n != n:
            raise FormatError(f"graph has {self.graph.n} nodes for {n} samples")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int | None:
        return None if self.labels is None else int(np.unique(self.labels).size)


def read_labels(path) -> np.ndarray:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not an integer label") from None
    return np.array(out, dtype=np.int64)


def write_labels(labels, path) -> None:
    with open(path, "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in labels)


def load_dataset(directory, name: str | None = None) -> DatasetBundle:
    d = Path(directory)
    fpath = d / FEATURES
    if not fpath.exists():
        raise FormatError(f"{d}: missing {FEATURES}")
    try:
        x = np.loadtxt(fpath, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{fpath}: {exc}") from None
    name = name or d.name
    if name.lower() == "usps":
        # this dataset is conventionally rescaled to [0, 2]
        lo, hi = x.min(), x.max()
        x = 2.0 * (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)
    labels = read_labels(d / LABELS) if (d / LABELS).exists() else None
    if labels is not None and labels.size != x.shape[0]:
        raise FormatError(f"{d}: {labels.size} labels for {x.shape[0]} feature rows")
    graph = load_edge_list(d / EDGES, x.shape[0]) if (d / EDGES).exists() else None
    return DatasetBundle(x, labels, graph, name)


def save_dataset(bundle: DatasetBundle, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.savetxt(d / FEATURES, bundle.features, delimiter=",", fmt="%.17g")
    if bundle.labels is not None:
        write_labels(bundle.labels, d / LABELS)
    if bundle.graph is not None:
        write_edge_list(bundle.graph, d / EDGES)
    return d


def _blobs(rng, n_clusters=3, n_per_cluster=100, dim=16, sigma=0.1, center_scale=1.0):
    centers = rng.standard_normal((n_clusters, dim)) * center_scale
    y = np.repeat(np.arange(n_clusters), n_per_cluster)
    x = centers[y] + sigma * rng.standard_normal((y.size, dim))
    return DatasetBundle(x, y, None, "blobs")


def _two_moons(rng, n_samples=200, noise=0.1, k=5):
    n_out = n_samples // 2
    n_in = n_samples - n_out
    t_out = np.linspace(0, np.pi, n_out)
    t_in = np.linspace(0, np.pi, n_in)
    x = np.vstack([
        np.stack([np.cos(t_out), np.sin(t_out)], axis=1),
        np.stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)], axis=1),
    ])
    x += noise * rng.standard_normal(x.shape)
    y = np.concatenate([np.zeros(n_out, dtype=np.int64), np.ones(n_in, dtype=np.int64)])
    return DatasetBundle(x, y, build_knn_graph(similarity(x, "heat"), k), "two-moons-graph")


def _sbm(rng, n_blocks=3, block_size=50, p_in=0.2, p_out=0.02, dim=100, feature_noise=2.0,
         features="binary", word_on=0.15, word_off=0.05):
    """Planted-partition graph plus block-correlated node features.

    ``features="binary"`` (default): bag-of-words style, each block owns an
    equal slice of the ``dim`` words and switches its own words on with
    probability ``word_on`` and the rest with ``word_off``.  The defaults
    leave k-means on the features alone at roughly 0.6 accuracy.
    ``features="gaussian"``: block mean + isotropic noise of scale
    ``feature_noise``.
    """
    y = np.repeat(np.arange(n_blocks), block_size)
    n = y.size
    same = y[:, None] == y[None, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, 1)
    i, j = np.nonzero(upper)
    graph = SparseGraph(n, np.stack([i, j], axis=1))
    if features == "gaussian":
        means = rng.standard_normal((n_blocks, dim))
        x = means[y] + feature_noise * rng.standard_normal((n, dim))
    elif features == "binary":
        owner = np.arange(dim) * n_blocks // dim
        on = np.where(owner[None, :] == y[:, None], word_on, word_off)
        x = (rng.random((n, dim)) < on).astype(np.float64)
    else:
        raise ParameterError(f"unknown feature model {features!r}")
    return DatasetBundle(x, y, graph, "sbm")


GENERATORS = {"blobs": _blobs, "two-moons-graph": _two_moons, "sbm": _sbm}


def make_synthetic(kind: str, params: dict | None = None, seed: int = 0) -> DatasetBundle:
    if kind not in GENERATORS:
        raise ParameterError(f"unknown synthetic kind {kind!r}; choose from {', '.join(GENERATORS)}")
    try:
        return GENERATORS[kind](np.random.default_rng(seed), **(params or {}))
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {kind}: {exc}") from None


def write_table(rows: list, path, columns=None) -> None:
    """Tab-separated table with a header line; floats written with repr precision."""
    columns = columns or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def read_table(path) -> list:
    def parse(v):
        for cast in (int, float):
            try:
                return cast(v)
            except ValueError:
                pass
        return v

    with open(path, newline="") as fh:
        rd = csv.reader(fh, delimiter="\t")
        header = next(rd)
        return [dict(zip(header, (parse(v) for v in row))) for row in rd]
