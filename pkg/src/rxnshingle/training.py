"""Optimization: k-means pseudo-labels, Adam with warmup + cosine decay, pre-training and fine-tuning."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .exceptions import (
    EmptyDataset,
    KTooLarge,
    LabelOutOfRange,
    LengthMismatch,
    NonFiniteLoss,
    NonFiniteValue,
)
from .fingerprints import drfp
from .metrics import CEN_FORMULA, metrics
from .model import ReactionFeatures, ShingleTransformer, make_batch
from .molecule import DatasetSplit

log = logging.getLogger(__name__)


# ----------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: list[float]
    n_iter: int


def _sq_dist(x: np.ndarray, c: np.ndarray, x_sq: np.ndarray) -> np.ndarray:
    d = x_sq[:, None] - 2.0 * (x @ c.T) + np.einsum("ij,ij->i", c, c)[None, :]
    return np.maximum(d, 0.0)


def _inertia(x: np.ndarray, c: np.ndarray, assign: np.ndarray) -> float:
    diff = x - c[assign]
    return float(np.einsum("ij,ij->", diff, diff))


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator, x_sq: np.ndarray) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    closest = _sq_dist(x, x[chosen], x_sq)[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dist(x, x[[idx]], x_sq)[:, 0])
    return x[chosen].copy()


def _repair_empty(x: np.ndarray, c: np.ndarray, assign: np.ndarray) -> None:
    """Refill empty clusters by splitting off the worst-fit point of the costliest cluster."""
    k = len(c)
    while True:
        counts = np.bincount(assign, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if not len(empty):
            return
        resid = np.einsum("ij,ij->i", x - c[assign], x - c[assign])
        cost = np.bincount(assign, weights=resid, minlength=k)
        cost[counts < 2] = -1.0
        donor = int(np.argmax(cost + 1e-12 * counts))
        members = np.flatnonzero(assign == donor)
        far = members[int(np.argmax(resid[members]))]
        target = int(empty[0])
        assign[far] = target
        c[target] = x[far]
        c[donor] = x[assign == donor].mean(axis=0)


def kmeans(points, k: int, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm from a k-means++ start.

    ``history`` holds the inertia after each completed iteration and never
    increases; the loop stops when assignments no longer change.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = len(x)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the number of points ({n})")
    rng = np.random.default_rng(seed)
    x_sq = np.einsum("ij,ij->i", x, x)
    c = _kmeans_pp(x, k, rng, x_sq)
    assign = np.argmin(_sq_dist(x, c, x_sq), axis=1)
    _repair_empty(x, c, assign)
    for j in range(k):
        c[j] = x[assign == j].mean(axis=0)
    history = [_inertia(x, c, assign)]
    n_iter = 0
    for _ in range(max_iter):
        new_assign = np.argmin(_sq_dist(x, c, x_sq), axis=1)
        if np.array_equal(new_assign, assign):
            break
        new_c = c.copy()
        _repair_empty(x, new_c, new_assign)
        for j in range(k):
            new_c[j] = x[new_assign == j].mean(axis=0)
        value = _inertia(x, new_c, new_assign)
        if value > history[-1]:
            break  # rounding-level tie flip; keep the better state
        assign, c = new_assign, new_c
        history.append(value)
        n_iter += 1
    return KMeansResult(assign, c, history[-1], history, n_iter)


@dataclass
class PseudoLabels:
    labels: np.ndarray            # (N, K_t)
    counts: tuple[int, ...]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        for k, n in enumerate(self.counts):
            if len(self.labels) and self.labels[:, k].max() >= n:
                raise LabelOutOfRange(f"head {k}: label >= {n}")


def pseudo_labels(reactions: Sequence, ks: Sequence[int] = (100, 1000, 4000), seed: int = 0,
                  radius: int = 3, nbits: int = 1024) -> PseudoLabels:
    """Cluster DRFP vectors at several granularities; one label column per ``k``."""
    if not reactions:
        raise EmptyDataset("no reactions to cluster")
    fps = np.stack([drfp(r, radius, nbits).bits for r in reactions]).astype(np.float64)
    cols = [kmeans(fps, k, seed=seed + i).assignments for i, k in enumerate(ks)]
    return PseudoLabels(np.stack(cols, axis=1), tuple(int(k) for k in ks))


# ----------------------------------------------------------------------------
# optimizer and schedule


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 64
    lr_init: float = 5e-5
    lr_min: float = 5e-6
    warmup_steps: int = 2000
    warmup_lr: float = 1e-6
    dropout: float = 0.1
    seed: int = 0
    task: str = "regression"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 1
    eval_batch_size: int = 64

    def __post_init__(self):
        if self.lr_min > self.lr_init:
            raise ValueError("lr_min must not exceed lr_init")
        if self.warmup_steps < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs, warmup_steps must be >= 0 and batch_size >= 1")
        if self.task not in ("regression", "classification", "pretrain"):
            raise ValueError(f"unknown task {self.task!r}")

    @classmethod
    def finetune_defaults(cls, **overrides) -> "TrainConfig":
        base = dict(epochs=150, batch_size=64, lr_init=1e-3, lr_min=1e-4, warmup_steps=100)
        return cls(**{**base, **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def learning_rate(step: int, cfg: TrainConfig, total_steps: int) -> float:
    """Linear warmup from ``warmup_lr`` to ``lr_init``, then cosine decay to ``lr_min``."""
    if step < cfg.warmup_steps:
        return cfg.warmup_lr + (cfg.lr_init - cfg.warmup_lr) * step / cfg.warmup_steps
    span = max(total_steps - cfg.warmup_steps, 1)
    t = min((step - cfg.warmup_steps) / span, 1.0)
    return cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1.0 + math.cos(math.pi * t))


class Adam:
    def __init__(self, params: dict[str, ad.Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.t = 0

    def step(self, lr: float):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():  # fixed insertion order
            g = p.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - update).astype(p.data.dtype)
            p.grad = None


# ----------------------------------------------------------------------------
# losses


def pretrain_loss(logits: Sequence[ad.Tensor], labels: np.ndarray,
                  counts: Sequence[int] | None = None) -> ad.Tensor:
    """Sum over heads of batch-mean cross-entropy (= batch mean of per-sample sums)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim == 1:
        labels = labels[:, None]
    if labels.shape[1] != len(logits):
        raise LengthMismatch(f"{len(logits)} heads but labels have {labels.shape[1]} columns")
    total = None
    for k, lg in enumerate(logits):
        n_cls = lg.shape[-1] if counts is None else counts[k]
        col = labels[:, k]
        if col.min(initial=0) < 0 or col.max(initial=0) >= n_cls:
            raise LabelOutOfRange(f"head {k}: labels must lie in [0, {n_cls})")
        term = ad.cross_entropy(lg, col)
        total = term if total is None else total + term
    return total


def task_loss(model: ShingleTransformer, out: ad.Tensor, targets: np.ndarray) -> ad.Tensor:
    if model.config.task == "classification":
        n = model.config.n_outputs
        t = np.asarray(targets, dtype=np.int64)
        if t.min(initial=0) < 0 or t.max(initial=0) >= n:
            raise LabelOutOfRange(f"class labels must lie in [0, {n})")
        return ad.cross_entropy(out, t)
    return ad.mse(out, targets)


# ----------------------------------------------------------------------------
# loops


@dataclass
class TrainReport:
    config: dict
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_metrics: dict = field(default_factory=dict)
    final_metrics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.config.get("task") == "classification":
            d["cen_definition"] = CEN_FORMULA
        return d


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + size] for i in range(0, n, size)]


def _check_loss(loss: ad.Tensor, epoch: int, step: int, lr: float):
    if not np.isfinite(loss.data).all():
        raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}, step {step}, lr {lr:g}")


def _run_epochs(model: ShingleTransformer, n_items: int, cfg: TrainConfig,
                loss_fn: Callable[[np.ndarray, np.random.Generator], ad.Tensor],
                on_epoch: Callable[[int, float], None]):
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, cfg.beta1, cfg.beta2, cfg.eps)
    steps_per_epoch = math.ceil(n_items / cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in _batches(n_items, cfg.batch_size, rng):
            lr = learning_rate(step, cfg, total)
            try:
                loss = loss_fn(idx, rng)
            except NonFiniteValue as exc:
                raise NonFiniteLoss(
                    f"non-finite value at epoch {epoch}, step {step}, lr {lr:g}: {exc}") from exc
            _check_loss(loss, epoch, step, lr)
            model.zero_grad()
            loss.backward()
            opt.step(lr)
            losses.append(float(loss.data) * len(idx))
            step += 1
        on_epoch(epoch, sum(losses) / n_items)


def evaluate(model: ShingleTransformer, feats: Sequence[ReactionFeatures], labels,
             batch_size: int = 64) -> dict[str, float]:
    """Metrics with batched inference (fast; may differ from per-reaction inference in the last bits)."""
    if not feats:
        return {}
    raw = np.concatenate([model.forward(feats[i:i + batch_size])[1].data
                          for i in range(0, len(feats), batch_size)]).astype(np.float64)
    if model.config.task == "classification":
        preds = raw.argmax(axis=1)
        return metrics(preds, np.asarray(labels, dtype=np.int64), "classification")
    mean, std = model.label_stats
    if len(feats) < 2:
        return {}
    return metrics(raw[:, 0] * std + mean, np.asarray(labels, dtype=np.float64), "regression")


def _primary(task: str, m: dict) -> float:
    """Higher is better."""
    if not m:
        return -math.inf
    return m["ACC"] if task == "classification" else -m["RMSE"]


def finetune(model: ShingleTransformer, split: DatasetSplit, cfg: TrainConfig,
             train_feats: Sequence[ReactionFeatures] | None = None,
             test_feats: Sequence[ReactionFeatures] | None = None,
             stop_when: Callable[[dict], bool] | None = None) -> tuple[ShingleTransformer, TrainReport]:
    """Train on ``split.train``; evaluate each ``eval_every`` epochs on both splits.

    Returns the model at the best test epoch (train metrics when the test split
    is empty) and the report. ``stop_when`` sees each epoch record and may end
    training early.
    """
    if not split.train:
        raise EmptyDataset("training split is empty")
    task = model.config.task
    model.config = replace(model.config, dropout=cfg.dropout)
    train_feats = list(train_feats) if train_feats is not None else [model.featurize(r.reaction) for r in split.train]
    test_feats = list(test_feats) if test_feats is not None else [model.featurize(r.reaction) for r in split.test]
    y_train = np.array([r.label for r in split.train], dtype=np.float64)
    y_test = np.array([r.label for r in split.test], dtype=np.float64)
    if task == "regression":
        mean = float(y_train.mean())
        std = float(y_train.std()) or 1.0
        model.label_stats = (mean, std)
        targets = (y_train - mean) / std
    else:
        targets = y_train.astype(np.int64)
    report = TrainReport(config={"train": cfg.to_dict(), "model": model.config.to_dict(),
                                 "task": task})
    best = {"score": -math.inf, "params": None}

    def record(epoch: int, train_loss: float | None):
        entry = {"epoch": epoch}
        if train_loss is not None:
            entry["train_loss"] = train_loss
        due = epoch == 0 or epoch == cfg.epochs or (cfg.eval_every and epoch % cfg.eval_every == 0)
        if due:
            entry["train"] = evaluate(model, train_feats, y_train, cfg.eval_batch_size)
            entry["test"] = evaluate(model, test_feats, y_test, cfg.eval_batch_size)
            score = _primary(task, entry["test"] or entry["train"])
            if score > best["score"]:
                best.update(score=score, params={k: v.copy() for k, v in model.state_arrays().items()})
                report.best_epoch = epoch
                report.best_metrics = {"train": entry["train"], "test": entry["test"]}
            report.final_metrics = {"train": entry["train"], "test": entry["test"]}
            log.info("epoch %d loss %s train %s test %s", epoch, train_loss, entry["train"], entry["test"])
        report.history.append(entry)
        if stop_when is not None and due and stop_when(entry):
            raise _Stop

    def loss_fn(idx, rng):
        _, out = model.forward([train_feats[i] for i in idx], training=True, rng=rng)
        return task_loss(model, out, targets[idx])

    try:
        record(0, None)
        _run_epochs(model, len(train_feats), cfg, loss_fn, record)
    except _Stop:
        pass
    best_model = ShingleTransformer(model.config, best["params"], model.label_stats)
    return best_model, report


class _Stop(Exception):
    pass


def pretrain(model: ShingleTransformer, feats: Sequence[ReactionFeatures], labels: PseudoLabels,
             cfg: TrainConfig) -> list[float]:
    """Multi-head pseudo-label classification; returns mean training loss per epoch."""
    if not feats:
        raise EmptyDataset("no reactions to pre-train on")
    if tuple(model.config.pretrain_classes) != tuple(labels.counts):
        raise LengthMismatch(f"model has heads {model.config.pretrain_classes}, "
                             f"labels have {labels.counts}")
    if len(feats) != len(labels.labels):
        raise LengthMismatch("one pseudo-label row per reaction is required")
    model.config = replace(model.config, dropout=cfg.dropout)
    feats = list(feats)
    losses: list[float] = []

    def loss_fn(idx, rng):
        emb = model.encode(make_batch([feats[i] for i in idx]), training=True, rng=rng)
        return pretrain_loss(model.pretrain_logits(emb), labels.labels[idx], labels.counts)

    _run_epochs(model, len(feats), cfg, loss_fn, lambda epoch, loss: losses.append(loss))
    return losses
