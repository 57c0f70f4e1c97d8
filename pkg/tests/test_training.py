import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.cluster import KMeans

from rxnshingle import autodiff as ad
from rxnshingle.exceptions import EmptyDataset, KTooLarge, LabelOutOfRange, NonFiniteLoss
from rxnshingle.model import ModelConfig, ShingleTransformer, make_batch
from rxnshingle.molecule import DatasetSplit, LabeledReaction
from rxnshingle.synthetic import random_reactions, shingle_count_dataset
from rxnshingle.training import (
    Adam,
    PseudoLabels,
    TrainConfig,
    _run_epochs,
    finetune,
    kmeans,
    learning_rate,
    pretrain,
    pretrain_loss,
    pseudo_labels,
    task_loss,
)


def _blobs(rng, n=40, sep=50.0):
    a = rng.standard_normal((n, 4))
    b = rng.standard_normal((n, 4)) + sep
    return np.vstack([a, b]), np.repeat([0, 1], n)


def test_two_blobs(rng):
    x, truth = _blobs(rng)
    res = kmeans(x, 2, seed=0)
    assert len(set(zip(res.assignments.tolist(), truth.tolist()))) == 2
    ref = KMeans(2, n_init=1, random_state=0).fit(x)
    assert res.inertia == pytest.approx(ref.inertia_, rel=1e-9)


def test_k_equals_distinct_points(rng):
    x = rng.integers(0, 2, (6, 8)).astype(float)
    x = np.unique(x, axis=0)
    assert kmeans(x, len(x)).inertia == 0.0


def test_fixed_point(rng):
    x, _ = _blobs(rng)
    res = kmeans(x, 2, seed=1)
    again = kmeans(x, 2, seed=1, max_iter=res.n_iter + 5)
    assert np.array_equal(res.assignments, again.assignments)
    d = ((x[:, None, :] - res.centroids[None]) ** 2).sum(-1)
    assert np.array_equal(d.argmin(1), res.assignments)


def test_k_too_large():
    with pytest.raises(KTooLarge):
        kmeans(np.zeros((3, 2)), 4)


def test_duplicate_points_no_empty_cluster():
    x = np.vstack([np.zeros((10, 3)), np.ones((2, 3))])
    res = kmeans(x, 4, seed=0)
    assert len(np.unique(res.assignments)) == 4


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.integers(1, 12))
def test_monotone_and_deterministic(seed, k):
    x = np.random.default_rng(seed).integers(0, 2, (60, 32)).astype(float)
    a, b = kmeans(x, k, seed=seed), kmeans(x, k, seed=seed)
    assert np.array_equal(a.assignments, b.assignments)
    assert all(h2 <= h1 for h1, h2 in zip(a.history, a.history[1:]))


def test_pseudo_labels_ranges():
    rxns = random_reactions(40, seed=2)
    pl = pseudo_labels(rxns, ks=(3, 7), seed=0, radius=2)
    assert pl.labels.shape == (40, 2) and pl.counts == (3, 7)
    assert pl.labels[:, 0].max() < 3 and pl.labels[:, 1].max() < 7
    with pytest.raises(LabelOutOfRange):
        PseudoLabels(np.array([[5]]), (3,))
    with pytest.raises(EmptyDataset):
        pseudo_labels([], ks=(2,))


def test_schedule():
    cfg = TrainConfig(lr_init=1e-3, lr_min=1e-4, warmup_steps=10, warmup_lr=1e-6)
    assert learning_rate(0, cfg, 100) == pytest.approx(1e-6)
    assert learning_rate(5, cfg, 100) == pytest.approx(1e-6 + 0.5 * (1e-3 - 1e-6))
    assert learning_rate(10, cfg, 100) == pytest.approx(1e-3)
    assert learning_rate(55, cfg, 100) == pytest.approx(0.5 * (1e-3 + 1e-4))
    assert learning_rate(100, cfg, 100) == pytest.approx(1e-4)
    lrs = [learning_rate(s, cfg, 100) for s in range(10, 101)]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))


def test_table_defaults():
    cfg = TrainConfig()
    assert (cfg.lr_init, cfg.lr_min, cfg.warmup_steps, cfg.batch_size, cfg.warmup_lr) == \
        (5e-5, 5e-6, 2000, 64, 1e-6)
    with pytest.raises(ValueError):
        TrainConfig(lr_init=1e-4, lr_min=1e-3)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_pretrain_loss_examples():
    labels = np.array([[0, 1], [2, 3]])
    uniform = [ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((2, 5)))]
    assert pretrain_loss(uniform, labels, (3, 5)).item() == pytest.approx(math.log(3) + math.log(5))
    sharp = np.full((2, 3), -50.0)
    sharp[[0, 1], [0, 2]] = 50.0
    assert pretrain_loss([ad.Tensor(sharp)], labels[:, :1], (3,)).item() < 1e-30
    logits = ad.Tensor(np.random.default_rng(0).standard_normal((2, 3)))
    assert pretrain_loss([logits], labels[:, 0]).item() == ad.cross_entropy(logits, labels[:, 0]).item()
    with pytest.raises(LabelOutOfRange):
        pretrain_loss(uniform, np.array([[0, 5], [0, 0]]), (3, 5))


def _split(n=16, seed=0):
    return DatasetSplit(list(shingle_count_dataset(n, seed=seed, radius=2)), [])


def test_zero_epochs_returns_initial():
    model = ShingleTransformer(ModelConfig.profile("desk", radius=2))
    init = {k: v.copy() for k, v in model.state_arrays().items()}
    best, report = finetune(model, _split(), TrainConfig(epochs=0))
    assert all(np.array_equal(best.state_arrays()[k], v) for k, v in init.items())
    assert len(report.history) == 1 and report.history[0]["train"]
    assert report.best_epoch == 0


def test_loss_decreases_ten_steps():
    cfg = ModelConfig.profile("desk", radius=2, dropout=0.0)
    model = ShingleTransformer(cfg)
    data = _split(16).train
    feats = [model.featurize(r.reaction) for r in data]
    y = np.array([r.label for r in data])
    y = (y - y.mean()) / y.std()
    opt = Adam(model.params)
    losses = []
    for _ in range(10):
        _, out = model.forward(feats)
        loss = task_loss(model, out, y)
        losses.append(loss.item())
        model.zero_grad()
        loss.backward()
        opt.step(TrainConfig.finetune_defaults().lr_init)
    assert losses[-1] < losses[0]


def test_training_is_deterministic(tmp_path):
    def run(path):
        model = ShingleTransformer(ModelConfig.profile("desk", radius=2))
        best, _ = finetune(model, _split(12), TrainConfig(epochs=2, batch_size=4, warmup_steps=2,
                                                          lr_init=1e-3, lr_min=1e-4))
        best.save(path)
        return path.read_bytes()
    assert run(tmp_path / "a.ckpt") == run(tmp_path / "b.ckpt")


def test_best_epoch_uses_test_split():
    data = list(shingle_count_dataset(20, seed=3, radius=2))
    model = ShingleTransformer(ModelConfig.profile("desk", radius=2))
    _, report = finetune(model, DatasetSplit(data[:14], data[14:]),
                         TrainConfig(epochs=3, batch_size=7, warmup_steps=1, lr_init=1e-3, lr_min=1e-4))
    rmse = {h["epoch"]: h["test"]["RMSE"] for h in report.history if "test" in h}
    assert report.best_epoch == min(rmse, key=rmse.get)
    assert report.final_metrics["test"] == report.history[-1]["test"]


def test_non_finite_loss():
    model = ShingleTransformer(ModelConfig.profile("desk", radius=2, dtype="float64"))
    feats = [model.featurize(r.reaction) for r in _split(4).train]

    def loss_fn(idx, rng):
        _, out = model.forward([feats[i] for i in idx])
        return task_loss(model, out * 1e300 * 1e300, np.zeros(len(idx)))

    with pytest.raises(NonFiniteLoss):
        _run_epochs(model, len(feats), TrainConfig(epochs=1, batch_size=4), loss_fn, lambda *a: None)


def test_classification_finetune():
    rxns = random_reactions(12, seed=5)
    data = [LabeledReaction(r, i % 3) for i, r in enumerate(rxns)]
    model = ShingleTransformer(ModelConfig.profile("desk", task="classification", n_outputs=3))
    _, report = finetune(model, DatasetSplit(data, []), TrainConfig(epochs=1, batch_size=6,
                                                                    task="classification"))
    assert set(report.history[-1]["train"]) == {"ACC", "MCC", "CEN"}
    assert "cen_definition" in report.to_dict()


def test_pretrain_runs():
    rxns = random_reactions(24, seed=9)
    pl = pseudo_labels(rxns, ks=(4, 6), radius=2)
    model = ShingleTransformer(ModelConfig.profile("desk", radius=2, pretrain_classes=(4, 6)))
    feats = [model.featurize(r) for r in rxns]
    losses = pretrain(model, feats, pl, TrainConfig(epochs=2, batch_size=8, warmup_steps=1,
                                                    lr_init=1e-3, lr_min=1e-4))
    assert len(losses) == 2 and all(np.isfinite(losses))
    emb = model.encode(make_batch(feats[:2]))
    assert [lg.shape for lg in model.pretrain_logits(emb)] == [(2, 4), (2, 6)]
