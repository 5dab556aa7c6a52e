"""Config files, experiment runs and parameter sweeps.

A config is a flat ``key = value`` text file; ``#`` starts a comment.  Keys
prefixed ``synth.`` are handed to the synthetic generator named by
``synthetic``.  Resolution order is command line, then file, then defaults.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from .autoencoder import PretrainConfig, load_autoencoder, pretrain, save_autoencoder
from .data import DatasetBundle, load_dataset, make_synthetic, write_labels, write_table
from .errors import ConfigError
from .graph import build_knn_graph, similarity
from .metrics import evaluate
from .trainer import TrainConfig, canonical_variant, depth_sweep, train_sdcn

DEFAULTS = {
    "dataset": "",
    "synthetic": "",
    "graph_source": "auto",
    "knn_k": 5,
    "similarity": "auto",
    "heat_t": 0.0,
    "epochs": 0,
    "lr": 1e-3,
    "alpha": 0.1,
    "beta": 0.01,
    "epsilon": 0.5,
    "n_clusters": 0,
    "seed": 0,
    "variant": "full",
    "depth": 0,
    "kmeans_restarts": 20,
    "threads": 1,
    "pretrain_epochs": 30,
    "pretrain_batch_size": 256,
    "pretrain_lr": 1e-3,
    "hidden": "500,500,2000,10",
    "ae_cache": "",
    "out": "out",
}
SYNTH_PREFIX = "synth."
# epochs=0 means "pick by graph source": provided graphs train shorter
EPOCHS_FILE_GRAPH = 50
EPOCHS_KNN_GRAPH = 200

SWEEPS = {
    "epsilon": [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
    "knn_k": [1, 3, 5, 10],
    "depth": [1, 2, 3, 4],
}


def _auto(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _coerce(key: str, value):
    if key.startswith(SYNTH_PREFIX):
        return _auto(value) if isinstance(value, str) else value
    default = DEFAULTS[key]
    if isinstance(value, type(default)) and not isinstance(value, bool):
        return value
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {value!r} as {type(default).__name__}") from None
    return str(value)


def _check_keys(keys, where: str) -> None:
    unknown = sorted(k for k in keys if k not in DEFAULTS and not k.startswith(SYNTH_PREFIX))
    if unknown:
        raise ConfigError(f"unknown config key(s) in {where}: {', '.join(unknown)}")


def parse_config_text(text: str, where: str = "config") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{where}:{lineno}: empty key")
        out[key] = value
    _check_keys(out, where)
    return out


def resolve_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the file at ``path``, then ``overrides``; values are typed."""
    cfg = dict(DEFAULTS)
    layers = []
    if path is not None:
        layers.append(parse_config_text(Path(path).read_text(), str(path)))
    if overrides:
        _check_keys(overrides, "command line")
        layers.append({k: v for k, v in overrides.items() if v is not None})
    for layer in layers:
        for k, v in layer.items():
            cfg[k] = _coerce(k, v)
    return cfg


def load_bundle(cfg: dict) -> DatasetBundle:
    if cfg["dataset"] and cfg["synthetic"]:
        raise ConfigError("set either dataset or synthetic, not both")
    if cfg["dataset"]:
        return load_dataset(cfg["dataset"])
    if cfg["synthetic"]:
        params = {k[len(SYNTH_PREFIX):]: v for k, v in cfg.items() if k.startswith(SYNTH_PREFIX)}
        return make_synthetic(cfg["synthetic"], params, cfg["seed"])
    raise ConfigError("no data: set dataset or synthetic")


def graph_for(bundle: DatasetBundle, cfg: dict, knn_k: int | None = None):
    source = cfg["graph_source"]
    if source == "auto":
        source = "file" if bundle.graph is not None else "knn"
    if source == "file":
        if bundle.graph is None:
            raise ConfigError("graph_source=file but the dataset has no edge list")
        return bundle.graph, source
    if source != "knn":
        raise ConfigError(f"graph_source must be auto, knn or file, not {source!r}")
    s = similarity(bundle.features, cfg["similarity"], cfg["heat_t"] or None)
    return build_knn_graph(s, knn_k or cfg["knn_k"]), source


def train_config(cfg: dict, bundle: DatasetBundle, source: str) -> TrainConfig:
    k = cfg["n_clusters"] or bundle.n_classes
    if not k:
        raise ConfigError("n_clusters is required when the dataset has no labels")
    epochs = cfg["epochs"] or (EPOCHS_FILE_GRAPH if source == "file" else EPOCHS_KNN_GRAPH)
    try:
        hidden = tuple(int(v) for v in str(cfg["hidden"]).split(","))
    except ValueError:
        raise ConfigError(f"hidden: expected comma separated widths, got {cfg['hidden']!r}") from None
    pre = PretrainConfig(cfg["pretrain_epochs"], cfg["pretrain_batch_size"], cfg["pretrain_lr"], cfg["seed"], hidden)
    return TrainConfig(
        epochs=epochs, lr=cfg["lr"], alpha=cfg["alpha"], beta=cfg["beta"], epsilon=cfg["epsilon"],
        n_clusters=int(k), seed=cfg["seed"], variant=canonical_variant(cfg["variant"]),
        depth=cfg["depth"] or None, kmeans_restarts=cfg["kmeans_restarts"], threads=cfg["threads"],
        pretrain=pre,
    ).validate()


def pretrained_autoencoder(x, cfg: dict, tc: TrainConfig):
    """Load ``ae_cache`` when it exists, otherwise pretrain (and fill the cache)."""
    cache = cfg["ae_cache"]
    if cache and Path(cache).exists():
        ae = load_autoencoder(cache)
        if ae.dims[0] != x.shape[1]:
            raise ConfigError(f"{cache}: autoencoder expects {ae.dims[0]} features, data has {x.shape[1]}")
        return ae
    with threadpool_limits(limits=tc.threads):
        ae = pretrain(x, tc.pretrain)
    if cache:
        save_autoencoder(ae, cache)
    return ae


def execute(cfg: dict) -> dict:
    """Train once and write ``epochs.jsonl``, ``summary.json``, ``labels.txt``, ``params.bin``."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    bundle = load_bundle(cfg)
    graph, source = graph_for(bundle, cfg)
    tc = train_config(cfg, bundle, source)
    ae = pretrained_autoencoder(bundle.features, cfg, tc)
    with open(out / "epochs.jsonl", "w") as fh:
        model, records, final = train_sdcn(
            bundle.features, graph, tc, ae=ae, labels=bundle.labels,
            on_epoch=lambda rec: fh.write(rec.to_json() + "\n"),
        )
    write_labels(final, out / "labels.txt")
    model.save(out / "params.bin")
    last = records[-1]
    summary = {
        # output locations are left out so reruns elsewhere compare byte for byte
        "config": {k: cfg[k] for k in sorted(cfg) if k not in ("out", "ae_cache")},
        "dataset": bundle.name,
        "n_samples": bundle.n,
        "n_edges": int(len(graph.edges)),
        "graph_source": source,
        "epochs": tc.epochs,
        "variant": tc.variant,
        "threads": tc.threads,
        "final_losses": {"l_res": last.l_res, "l_clu": last.l_clu, "l_gcn": last.l_gcn, "l_total": last.l_total},
        "metrics": evaluate(final, bundle.labels) if bundle.labels is not None else None,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def run_experiment(config_path, overrides: dict | None = None) -> int:
    try:
        execute(resolve_config(config_path, overrides))
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def sweep(kind: str, cfg: dict) -> Path:
    """One metrics row per setting of ``kind``; written to ``sweep_<kind>.tsv`` under ``out``."""
    if kind not in SWEEPS:
        raise ConfigError(f"unknown sweep {kind!r}; choose from {', '.join(SWEEPS)}")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    bundle = load_bundle(cfg)
    if bundle.labels is None:
        raise ConfigError("sweeps report metrics and need ground-truth labels")
    if kind == "knn_k":
        cfg = dict(cfg, graph_source="knn")
    graph, source = graph_for(bundle, cfg)
    tc = train_config(cfg, bundle, source)
    ae = pretrained_autoencoder(bundle.features, cfg, tc)
    x, y = bundle.features, bundle.labels
    rows = []
    if kind == "depth":
        rows = depth_sweep(x, graph, tc, y, SWEEPS["depth"], ae=ae)
    else:
        for value in SWEEPS[kind]:
            if kind == "epsilon":
                g, run_tc = graph, replace(tc, epsilon=value)
            else:
                g, run_tc = graph_for(bundle, cfg, knn_k=value)[0], tc
            _, _, final = train_sdcn(x, g, run_tc, ae=ae, labels=y)
            rows.append({kind: value, **evaluate(final, y)})
    path = out / f"sweep_{kind}.tsv"
    write_table(rows, path)
    return path
