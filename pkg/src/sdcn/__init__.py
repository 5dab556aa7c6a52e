"""Deep clustering that couples an autoencoder with a graph convolutional network."""

from .data import DatasetBundle, load_dataset, make_synthetic
from .graph import SparseGraph, build_knn_graph, similarity
from .metrics import evaluate, kmeans
from .trainer import TrainConfig, run_variant, train_sdcn

__all__ = [
    "DatasetBundle",
    "SparseGraph",
    "TrainConfig",
    "build_knn_graph",
    "evaluate",
    "kmeans",
    "load_dataset",
    "make_synthetic",
    "run_variant",
    "similarity",
    "train_sdcn",
]
__version__ = "0.1.0"
