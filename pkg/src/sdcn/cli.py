"""Command line entry point: ``sdcn <verb> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .autoencoder import pretrain, save_autoencoder
from .data import make_synthetic, read_labels, save_dataset
from .errors import ConfigError
from .experiments import SWEEPS, graph_for, load_bundle, resolve_config, run_experiment, sweep, train_config
from .gcn import probe_second_order_bound, probe_unrolled_propagation, smoothing_ratio
from .graph import random_graph
from .metrics import evaluate

ERRORS = (ValueError, ArithmeticError, RuntimeError, OSError)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--variant", help="full, no-delivery, mlp or q-output")
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for k in ("seed", "out", "variant", "dataset"):
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _cmd_train(args) -> int:
    return run_experiment(args.config, _overrides(args))


def _cmd_pretrain(args) -> int:
    cfg = resolve_config(args.config, _overrides(args))
    bundle = load_bundle(cfg)
    _, source = graph_for(bundle, cfg)
    tc = train_config(cfg, bundle, source)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pretrain.jsonl", "w") as fh:
        ae = pretrain(bundle.features, tc.pretrain,
                      callback=lambda e, l: fh.write(json.dumps({"epoch": e, "loss": l}) + "\n"))
    save_autoencoder(ae, out / "params.bin")
    print(out / "params.bin")
    return 0


def _cmd_sweep(args) -> int:
    print(sweep(args.kind, resolve_config(args.config, _overrides(args))))
    return 0


def _cmd_synth(args) -> int:
    params = {}
    for item in args.param:
        k, _, v = item.partition("=")
        for cast in (int, float, str):
            try:
                params[k] = cast(v)
                break
            except ValueError:
                pass
    bundle = make_synthetic(args.kind, params, args.seed or 0)
    print(save_dataset(bundle, args.out or f"{args.kind}-{args.seed or 0}"))
    return 0


def _cmd_eval(args) -> int:
    print(json.dumps(evaluate(read_labels(args.pred), read_labels(args.truth)), sort_keys=True))
    return 0


def _cmd_probe(args) -> int:
    rng = np.random.default_rng(args.seed or 0)
    if args.kind == "unrolled":
        worst = 0.0
        for _ in range(args.trials):
            n = int(rng.integers(2, 17))
            a = random_graph(n, 0.4, rng).normalized
            x = rng.standard_normal((n, 3))
            hs = [rng.standard_normal((n, 3)) for _ in range(4)]
            for L in (1, 2, 3, 4):
                for eps in (0.0, 0.25, 0.5, 1.0):
                    worst = max(worst, probe_unrolled_propagation(x, hs, a, eps, L)[2])
        result = {"probe": "unrolled", "trials": args.trials, "max_abs_diff": worst}
    elif args.kind == "bound":
        violations, worst = 0, -np.inf
        for _ in range(args.trials):
            n = int(rng.integers(2, 13))
            g = random_graph(n, 0.4, rng)
            h = rng.standard_normal((n, 3))
            i, j = rng.choice(n, 2, replace=False)
            lhs, rhs = probe_second_order_bound(h, g, int(i), int(j))
            worst = max(worst, lhs - rhs)
            violations += lhs > rhs + 1e-9
        result = {"probe": "bound", "trials": args.trials, "violations": int(violations), "max_excess": worst}
    else:
        bundle = make_synthetic("sbm", {}, args.seed or 0)
        ratio = smoothing_ratio(bundle.features, bundle.graph.normalized, L=4, eps=0.5)
        result = {"probe": "smoothing", "ratio": ratio}
    print(json.dumps(result, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdcn", description="structural deep clustering")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("pretrain", help="pretrain the autoencoder and write params.bin")
    _common(p)
    p.set_defaults(fn=_cmd_pretrain)

    p = sub.add_parser("train", help="joint training; writes epochs.jsonl, summary.json, labels.txt, params.bin")
    _common(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("sweep", help="one metrics row per setting")
    p.add_argument("kind", choices=sorted(SWEEPS))
    _common(p)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("probe", help="numerical checks of the propagation identities")
    p.add_argument("kind", choices=["unrolled", "bound", "smoothing"])
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(fn=_cmd_probe)

    p = sub.add_parser("synth", help="write a synthetic dataset directory")
    p.add_argument("kind")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("eval", help="metrics of a predicted label file against ground truth")
    p.add_argument("pred")
    p.add_argument("truth")
    p.set_defaults(fn=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
