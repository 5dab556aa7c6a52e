from dataclasses import replace

import numpy as np
import pytest

from sdcn.autoencoder import PretrainConfig, encode, pretrain
from sdcn.data import make_synthetic
from sdcn.errors import ParameterError, TrainingError
from sdcn.graph import SparseGraph, build_knn_graph, similarity
from sdcn.metrics import accuracy, evaluate, kmeans
from sdcn.optim import Adam
from sdcn.trainer import (
    TrainConfig,
    build_model,
    depth_sweep,
    init_centers,
    run_variant,
    sdcn_step,
    train_sdcn,
)

SMALL = (32, 32, 64, 8)


def _blobs(seed=0):
    b = make_synthetic("blobs", {"n_per_cluster": 30}, seed)
    return b.features, b.labels, build_knn_graph(similarity(b.features, "heat"), 5)


def _config(**kw):
    base = TrainConfig(epochs=8, n_clusters=3, kmeans_restarts=5,
                       pretrain=PretrainConfig(epochs=10, batch_size=32, hidden=SMALL))
    return replace(base, **kw)


@pytest.fixture(scope="module")
def blobs():
    x, y, g = _blobs()
    ae = pretrain(x, PretrainConfig(epochs=10, batch_size=32, hidden=SMALL))
    return x, y, g, ae


def test_init_centers_on_separated_blobs():
    rng = np.random.default_rng(0)
    means = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    h = np.repeat(means, 20, axis=0) + rng.normal(0, 0.1, (60, 2))
    c = init_centers(h, 3, restarts=5)
    order = np.lexsort(c.mu.T[::-1])
    np.testing.assert_allclose(c.mu[order], means[np.lexsort(means.T[::-1])], atol=0.1)
    assert c.v == 1.0
    one = init_centers(h, 1)
    np.testing.assert_allclose(one.mu[0], h.mean(axis=0), atol=1e-12)
    again = init_centers(h, 3, restarts=5)
    assert np.array_equal(c.mu, again.mu)


def test_rows_stay_stochastic(blobs):
    x, _, g, ae = blobs
    cfg = _config()
    model = build_model(x, cfg, ae)
    opt = Adam(model.flat(), lr=cfg.lr)
    for _ in range(5):
        step = sdcn_step(model, x, g.normalized, 0.5, 0.1, 0.01)
        for dist in (step.q, step.p, step.z):
            np.testing.assert_allclose(dist.sum(axis=1), 1.0, atol=1e-9)
            assert np.all(dist >= 0)
        opt.step(step.grads)


def test_seeded_runs_repeat_exactly(blobs):
    x, y, g, ae = blobs
    a = train_sdcn(x, g, _config(), ae=ae, labels=y)
    b = train_sdcn(x, g, _config(), ae=ae, labels=y)
    assert [r.to_json() for r in a[1]] == [r.to_json() for r in b[1]]
    assert np.array_equal(a[2], b[2])


def test_q_output_shares_the_loss_trajectory(blobs):
    x, y, g, ae = blobs
    full, _ = run_variant("full", x, g, _config(), ae, y)
    qout, labels = run_variant("q-output", x, g, _config(), ae, y)
    assert [(r.l_res, r.l_clu, r.l_gcn) for r in full] == [(r.l_res, r.l_clu, r.l_gcn) for r in qout]
    assert labels.shape == y.shape


def test_no_delivery_on_edgeless_graph_equals_mlp(blobs):
    x, y, _, ae = blobs
    edgeless = SparseGraph(x.shape[0], np.zeros((0, 2), int))
    a = run_variant("no-delivery", x, edgeless, _config(), ae, y)
    b = run_variant("mlp-instead-of-gcn", x, None, _config(), ae, y)
    assert [r.to_json() for r in a[0]] == [r.to_json() for r in b[0]]
    assert np.array_equal(a[1], b[1])


def test_full_delivery_cuts_gradient_to_hidden_gcn_weights(blobs):
    x, _, g, ae = blobs
    model = build_model(x, _config(), ae)
    step = sdcn_step(model, x, g.normalized, 1.0, 0.1, 0.01)
    n_w = len(model.gcn.widths) - 1
    for l in range(n_w - 1):
        assert np.all(step.grads[f"gcn_w{l}"] == 0)
    assert np.any(step.grads[f"gcn_w{n_w - 1}"] != 0)


def test_vanishing_weights_reduce_to_autoencoder_baseline(blobs):
    x, y, g, ae = blobs
    cfg = _config(alpha=1e-12, beta=1e-12, epochs=20)
    model, records, _ = train_sdcn(x, g, cfg, ae=ae, labels=y)
    h = encode(x, model.ae)[-1]
    baseline = accuracy(kmeans(h, 3, restarts=5)[1], y)
    assert abs(records[-1].metrics["Q"]["acc"] - baseline) <= 0.05


def test_unknown_variant_and_missing_graph(blobs):
    x, y, g, ae = blobs
    with pytest.raises(ParameterError):
        run_variant("bogus", x, g, _config(), ae, y)
    with pytest.raises(ParameterError):
        train_sdcn(x, None, _config(), ae=ae)
    with pytest.raises(ParameterError):
        train_sdcn(x, g, _config(epochs=0), ae=ae)


def test_non_finite_loss_aborts_with_record(blobs):
    x, y, g, ae = blobs
    broken = ae.copy()
    broken.tensors["dec_b0"][0] = np.nan
    with pytest.raises(TrainingError) as info:
        train_sdcn(x, g, _config(), ae=broken)
    assert info.value.record.epoch == 0


def test_metrics_recorded_for_every_distribution(blobs):
    x, y, g, ae = blobs
    _, records, final = train_sdcn(x, g, _config(epochs=3), ae=ae, labels=y)
    assert len(records) == 3
    for r in records:
        assert set(r.metrics) == {"P", "Q", "Z"}
        for m in r.metrics.values():
            assert 0 <= m["acc"] <= 1 and 0 <= m["nmi"] <= 1 and -1 <= m["ari"] <= 1
        assert all(np.isfinite([r.l_res, r.l_clu, r.l_gcn, r.l_total]))
    assert set(evaluate(final, y)) == {"acc", "nmi", "ari", "f1"}


def test_depth_sweep_table(blobs):
    x, y, g, ae = blobs
    rows = depth_sweep(x, g, _config(epochs=2), y, ae=ae)
    assert [r["depth"] for r in rows] == [1, 2, 3, 4]
    assert all(set(r) == {"depth", "acc", "nmi", "ari", "f1"} for r in rows)


def test_shallow_model_has_two_propagations(blobs):
    x, _, _, ae = blobs
    model = build_model(x, _config(depth=1), ae)
    assert model.gcn.widths == [x.shape[1], SMALL[-1], 3]


def test_separable_blobs_cluster_well():
    x, y, g = _blobs(1)
    _, _, final = train_sdcn(x, g, _config(epochs=60), labels=y)
    assert accuracy(final, y) >= 0.95
