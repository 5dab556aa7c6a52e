"""Joint training of the autoencoder, the GCN stack and the cluster centers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .autoencoder import (
    AutoencoderParams,
    PretrainConfig,
    decode_nodes,
    encode,
    encode_nodes,
    pretrain,
    write_tensors,
)
from .errors import ParameterError, TrainingError
from .gcn import GcnParams, check_epsilon, gcn_nodes
from .graph import SparseGraph
from .metrics import evaluate, kmeans
from .optim import Adam
from .selfsup import ClusterCenters, hard_labels, target_distribution
from .tensor import Tape

VARIANTS = ("full", "no-delivery", "mlp", "q-output")
ALIASES = {"mlp-instead-of-gcn": "mlp", "w/o": "no-delivery"}


def canonical_variant(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in VARIANTS:
        raise ParameterError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    return name


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    alpha: float = 0.1
    beta: float = 0.01
    epsilon: float = 0.5
    n_clusters: int = 3
    seed: int = 0
    variant: str = "full"
    depth: int | None = None
    kmeans_restarts: int = 20
    threads: int = 1
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.lr <= 0:
            raise ParameterError("learning rate must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise ParameterError("alpha and beta must be positive")
        if self.n_clusters < 1:
            raise ParameterError("need at least one cluster")
        self.variant = canonical_variant(self.variant)
        check_epsilon(self.epsilon)
        return self

    @property
    def effective_epsilon(self) -> float:
        # both ablations drop the delivery operator
        return 0.0 if self.variant in ("no-delivery", "mlp") else self.epsilon


@dataclass
class ModelParams:
    ae: AutoencoderParams
    gcn: GcnParams
    centers: ClusterCenters

    def flat(self) -> dict:
        out = dict(self.ae.tensors)
        out.update(self.gcn.tensors)
        out["mu"] = self.centers.mu
        return out

    def save(self, path) -> None:
        """Same binary layout as the autoencoder file, GCN weights and centers appended."""
        from .autoencoder import sorted_keys

        arrays = [self.ae.tensors[k] for k in sorted_keys(self.ae.n_layers)]
        arrays += self.gcn.weights() + [self.centers.mu]
        write_tensors(path, self.ae.dims, arrays)


@dataclass
class EpochRecord:
    epoch: int
    l_res: float
    l_clu: float
    l_gcn: float
    l_total: float
    metrics: dict | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class StepResult:
    l_res: float
    l_clu: float
    l_gcn: float
    l_total: float
    q: np.ndarray
    p: np.ndarray
    z: np.ndarray
    grads: dict | None


def init_centers(h_last, k: int, restarts: int = 20, seed: int = 0, v: float = 1.0) -> ClusterCenters:
    centers, _, _ = kmeans(h_last, k, restarts=restarts, seed=seed)
    return ClusterCenters(centers.copy(), v)


def loss_graph(tape: Tape, nodes: dict, model: ModelParams, x, a_hat, eps: float, p=None) -> dict:
    """Record the joint forward pass on ``tape``.

    ``nodes`` maps the keys of ``model.flat()`` to tape nodes.  Returns the
    nodes ``l_res``, ``l_clu``, ``l_gcn``, ``q``, ``z`` plus the constant
    target ``p`` (computed from ``q`` when not given).
    """
    n_enc = model.ae.n_layers
    hs = encode_nodes(tape, tape.const(x), nodes, n_enc)
    xhat = decode_nodes(tape, hs[-1], nodes, n_enc)
    q = tape.student_t(hs[-1], nodes["mu"], model.centers.v)
    if p is None:
        p = target_distribution(q.value)
    weights = [nodes[f"gcn_w{l}"] for l in range(len(model.gcn.widths) - 1)]
    _, z = gcn_nodes(tape, tape.const(x), hs[n_enc - model.gcn.depth:], a_hat, weights, eps)
    return {"l_res": tape.half_mse(x, xhat), "l_clu": tape.kl(p, q), "l_gcn": tape.kl(p, z),
            "q": q, "z": z, "p": p}


def sdcn_step(model: ModelParams, x, a_hat, eps: float, alpha: float, beta: float,
              p: np.ndarray | None = None, with_grads: bool = True) -> StepResult:
    """One full-batch forward pass of the joint model, optionally with gradients.

    ``p`` defaults to the target distribution of the current ``Q`` and is
    treated as a constant either way.
    """
    tape = Tape()
    make = tape.param if with_grads else tape.const
    nodes = {k: make(v, k) for k, v in model.flat().items()}
    out = loss_graph(tape, nodes, model, x, a_hat, eps, p)
    total = tape.weighted_sum([out["l_res"], out["l_clu"], out["l_gcn"]], [1.0, alpha, beta])
    grads = None
    if with_grads:
        tape.backward(total)
        grads = {k: (n.grad if n.grad is not None else np.zeros_like(n.value)) for k, n in nodes.items()}
    return StepResult(float(out["l_res"].value), float(out["l_clu"].value), float(out["l_gcn"].value),
                      float(total.value), out["q"].value, out["p"], out["z"].value, grads)


def _metrics(step: StepResult, labels) -> dict | None:
    if labels is None:
        return None
    return {name: evaluate(hard_labels(dist), labels)
            for name, dist in (("P", step.p), ("Q", step.q), ("Z", step.z))}


def build_model(x, config: TrainConfig, ae: AutoencoderParams | None = None) -> ModelParams:
    """Pretrain (unless given an autoencoder), seed centers by k-means, init GCN weights."""
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    if ae is None:
        ae = pretrain(x, replace(config.pretrain, seed=config.seed))
    else:
        ae = ae.copy()
    h_last = encode(x, ae)[-1]
    centers = init_centers(h_last, config.n_clusters, config.kmeans_restarts,
                           seed=int(seeds[0].generate_state(1)[0]))
    gcn = GcnParams.init(ae.dims, config.n_clusters, np.random.default_rng(seeds[1]), depth=config.depth)
    return ModelParams(ae, gcn, centers)


def train_sdcn(x, graph: SparseGraph | None, config: TrainConfig, ae: AutoencoderParams | None = None,
               labels=None, on_epoch=None):
    """Run the joint optimisation.

    Returns ``(model, records, final_labels)``.  ``labels`` (ground truth) only
    feeds the per-epoch metrics.  ``on_epoch(record)`` is called as records
    are produced.
    """
    config.validate()
    x = np.asarray(x, dtype=np.float64)
    if config.variant == "mlp":
        a_hat = None
    else:
        if graph is None:
            raise ParameterError(f"variant {config.variant!r} needs a graph")
        if graph.n != x.shape[0]:
            raise ParameterError(f"graph has {graph.n} nodes, data has {x.shape[0]} rows")
        a_hat = graph.normalized
    eps = config.effective_epsilon
    records = []
    with threadpool_limits(limits=config.threads):
        model = build_model(x, config, ae)
        opt = Adam(model.flat(), lr=config.lr)
        for epoch in range(config.epochs):
            step = sdcn_step(model, x, a_hat, eps, config.alpha, config.beta)
            rec = EpochRecord(epoch, step.l_res, step.l_clu, step.l_gcn, step.l_total, _metrics(step, labels))
            if not np.isfinite(step.l_total):
                raise TrainingError(f"loss became non-finite at epoch {epoch}", record=rec)
            records.append(rec)
            if on_epoch is not None:
                on_epoch(rec)
            opt.step(step.grads)
        final = sdcn_step(model, x, a_hat, eps, config.alpha, config.beta, with_grads=False)
    source = final.q if config.variant == "q-output" else final.z
    return model, records, hard_labels(source)


def run_variant(variant: str, x, graph, config: TrainConfig, ae=None, labels=None):
    variant = canonical_variant(variant)
    _, records, final = train_sdcn(x, graph, replace(config, variant=variant), ae=ae, labels=labels)
    return records, final


def depth_sweep(x, graph, config: TrainConfig, labels, depths=(1, 2, 3, 4), ae=None) -> list:
    """Vary how many of the deepest encoder layers feed the GCN; one metrics row per depth."""
    if ae is None:
        with threadpool_limits(limits=config.threads):
            ae = pretrain(x, replace(config.pretrain, seed=config.seed))
    rows = []
    for d in depths:
        _, _, final = train_sdcn(x, graph, replace(config, depth=d), ae=ae, labels=labels)
        rows.append({"depth": d, **evaluate(final, labels)})
    return rows
