import json

import numpy as np
import pytest

from sdcn.cli import main
from sdcn.data import (
    DatasetBundle,
    load_dataset,
    make_synthetic,
    read_labels,
    read_table,
    save_dataset,
    write_table,
)
from sdcn.errors import ConfigError, FormatError, ParameterError
from sdcn.experiments import parse_config_text, resolve_config, run_experiment, sweep
from sdcn.metrics import accuracy, kmeans

FAST = """
synthetic = blobs
synth.n_per_cluster = 20
synth.dim = 8
hidden = 16,16,32,4
pretrain_epochs = 5
pretrain_batch_size = 32
epochs = 5
kmeans_restarts = 3
"""


def test_blobs_are_separable_by_kmeans():
    b = make_synthetic("blobs", {}, 0)
    assert accuracy(kmeans(b.features, 3)[1], b.labels) >= 0.99


def test_sbm_is_modular():
    b = make_synthetic("sbm", {"p_out": 0.01}, 0)
    y = b.labels
    inside = sum(y[i] == y[j] for i, j in b.graph.edges)
    assert inside > 0.8 * len(b.graph.edges)
    binary = make_synthetic("sbm", {"features": "binary", "dim": 30}, 0)
    assert set(np.unique(binary.features)) <= {0.0, 1.0}
    with pytest.raises(ParameterError):
        make_synthetic("sbm", {"features": "other"}, 0)


def test_generators_are_seeded():
    for kind in ("blobs", "two-moons-graph", "sbm"):
        a, b = make_synthetic(kind, {}, 3), make_synthetic(kind, {}, 3)
        assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
        if a.graph is not None:
            assert np.array_equal(a.graph.edges, b.graph.edges)
    with pytest.raises(ParameterError):
        make_synthetic("nope")
    with pytest.raises(ParameterError):
        make_synthetic("blobs", {"bogus": 1})


def test_dataset_round_trip(tmp_path):
    b = make_synthetic("sbm", {}, 1)
    save_dataset(b, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert np.array_equal(back.features, b.features)
    assert np.array_equal(back.labels, b.labels)
    assert np.array_equal(back.graph.edges, b.graph.edges)


def test_features_only_dataset(tmp_path):
    save_dataset(DatasetBundle(np.ones((3, 2))), tmp_path / "d")
    b = load_dataset(tmp_path / "d")
    assert b.graph is None and b.labels is None


def test_short_label_file(tmp_path):
    save_dataset(DatasetBundle(np.ones((3, 2))), tmp_path / "d")
    (tmp_path / "d" / "labels.txt").write_text("0\n1\n")
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "d")


def test_usps_is_rescaled(tmp_path):
    save_dataset(DatasetBundle(np.array([[-1.0, 0.0], [1.0, 3.0]])), tmp_path / "usps")
    x = load_dataset(tmp_path / "usps").features
    assert x.min() == 0.0 and x.max() == 2.0


def test_table_round_trip(tmp_path):
    rows = [{"epsilon": 0.1, "acc": 0.5, "name": "a"}, {"epsilon": 1.0, "acc": 1 / 3, "name": "b"}]
    write_table(rows, tmp_path / "t.tsv")
    assert read_table(tmp_path / "t.tsv") == rows


def test_config_parsing_errors():
    with pytest.raises(ConfigError, match="lerning_rate"):
        parse_config_text("seed = 1\nlerning_rate = 0.1\n")
    with pytest.raises(ConfigError, match=":1"):
        parse_config_text("no equals sign")
    with pytest.raises(ConfigError):
        resolve_config(None, {"epochs": "many"})


def test_three_layer_precedence(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("seed = 7\nepochs = 11\n# lr stays default\n")
    cfg = resolve_config(f, {"seed": 9})
    assert cfg["seed"] == 9  # command line beats file
    assert cfg["epochs"] == 11  # file beats default
    assert cfg["lr"] == 1e-3  # default


def test_run_experiment_outputs_and_repeatability(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text(FAST)
    assert run_experiment(f, {"out": str(tmp_path / "a")}) == 0
    assert run_experiment(f, {"out": str(tmp_path / "b")}) == 0
    for name in ("epochs.jsonl", "summary.json", "labels.txt", "params.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["threads"] == 1 and summary["epochs"] == 5
    assert len((tmp_path / "a" / "epochs.jsonl").read_text().splitlines()) == 5
    assert read_labels(tmp_path / "a" / "labels.txt").size == 60


def test_run_experiment_reports_errors(tmp_path, capsys):
    f = tmp_path / "c.cfg"
    f.write_text("bogus_key = 1\n")
    assert run_experiment(f) == 1
    assert "bogus_key" in capsys.readouterr().err


def test_autoencoder_cache_is_reused(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text(FAST + f"ae_cache = {tmp_path / 'ae.bin'}\n")
    assert run_experiment(f, {"out": str(tmp_path / "a")}) == 0
    assert (tmp_path / "ae.bin").exists()
    assert run_experiment(f, {"out": str(tmp_path / "b")}) == 0
    assert (tmp_path / "a" / "epochs.jsonl").read_bytes() == (tmp_path / "b" / "epochs.jsonl").read_bytes()


@pytest.mark.parametrize("kind,n_rows", [("epsilon", 7), ("knn_k", 4), ("depth", 4)])
def test_sweeps_emit_one_row_per_setting(tmp_path, kind, n_rows):
    cfg = resolve_config(None, dict(parse_config_text(FAST), epochs="2", out=str(tmp_path)))
    rows = read_table(sweep(kind, cfg))
    assert len(rows) == n_rows
    assert all({"acc", "nmi", "ari", "f1"} <= set(r) for r in rows)


def test_cli_verbs(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "sbm", "--seed", "2", "--out", str(data), "--param", "block_size=10"]) == 0
    assert load_dataset(data).n == 30
    cfg = tmp_path / "c.cfg"
    cfg.write_text("hidden = 8,8,16,4\npretrain_epochs = 3\nepochs = 3\nkmeans_restarts = 2\n")
    out = tmp_path / "run"
    assert main(["pretrain", "--config", str(cfg), "--dataset", str(data), "--out", str(out)]) == 0
    assert (out / "params.bin").exists()
    assert main(["train", "--config", str(cfg), "--dataset", str(data), "--out", str(out),
                 "--variant", "no-delivery", "--seed", "1"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["variant"] == "no-delivery" and summary["config"]["seed"] == 1
    assert summary["graph_source"] == "file"
    capsys.readouterr()
    assert main(["eval", str(out / "labels.txt"), str(data / "labels.txt")]) == 0
    assert set(json.loads(capsys.readouterr().out)) == {"acc", "nmi", "ari", "f1"}
    assert main(["probe", "unrolled", "--trials", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["max_abs_diff"] < 1e-9
    assert main(["train", "--set", "nonsense=1"]) == 1
