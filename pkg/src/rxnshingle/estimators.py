"""scikit-learn style wrappers around the featurizers, the model and k-means."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .fingerprints import DRFP_BITS, drfp
from .model import ModelConfig, ShingleTransformer
from .molecule import DatasetSplit, LabeledReaction
from .training import TrainConfig, finetune, kmeans
from .validation import check_fingerprints, check_labels, check_reactions


class DRFPFeaturizer(TransformerMixin, BaseEstimator):
    """Reactions (SMILES or objects) to ``n_bits``-wide 0/1 DRFP rows."""

    def __init__(self, radius: int = 3, n_bits: int = DRFP_BITS):
        self.radius = radius
        self.n_bits = n_bits

    def fit(self, X, y=None):
        check_reactions(X)
        self.n_features_out_ = self.n_bits
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "n_features_out_")
        rxns = check_reactions(X)
        return np.stack([drfp(r, self.radius, self.n_bits).bits for r in rxns])

    def get_feature_names_out(self, input_features=None):
        return np.array([f"drfp{i}" for i in range(self.n_bits)], dtype=object)


class DRFPKMeans(ClusterMixin, BaseEstimator):
    """Lloyd k-means with k-means++ seeding over fingerprint rows."""

    def __init__(self, n_clusters: int = 8, random_state: int = 0, max_iter: int = 300):
        self.n_clusters = n_clusters
        self.random_state = random_state
        self.max_iter = max_iter

    def fit(self, X, y=None):
        x = check_fingerprints(X)
        res = kmeans(x, self.n_clusters, self.random_state, self.max_iter)
        self.labels_ = res.assignments
        self.cluster_centers_ = res.centroids
        self.inertia_ = res.inertia
        self.inertia_history_ = res.history
        self.n_iter_ = res.n_iter
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "cluster_centers_")
        x = check_fingerprints(X)
        c = self.cluster_centers_
        d = (x * x).sum(1)[:, None] - 2 * x @ c.T + (c * c).sum(1)[None, :]
        return np.argmin(d, axis=1)


class _ShingleModel(BaseEstimator):
    _task = "regression"

    def __init__(self, profile: str = "desk", radius: int = 3, shingle_mode: str = "symdiff",
                 use_pair_bias: bool = True, use_geometric: bool = True,
                 use_structural: bool = True, epochs: int = 150, batch_size: int = 64,
                 lr_init: float = 1e-3, lr_min: float = 1e-4, warmup_steps: int = 100,
                 warmup_lr: float = 1e-6, dropout: float = 0.1, dtype: str = "float32",
                 random_state: int = 0):
        self.profile = profile
        self.radius = radius
        self.shingle_mode = shingle_mode
        self.use_pair_bias = use_pair_bias
        self.use_geometric = use_geometric
        self.use_structural = use_structural
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_init = lr_init
        self.lr_min = lr_min
        self.warmup_steps = warmup_steps
        self.warmup_lr = warmup_lr
        self.dropout = dropout
        self.dtype = dtype
        self.random_state = random_state

    def _configs(self, n_outputs: int) -> tuple[ModelConfig, TrainConfig]:
        mcfg = ModelConfig.profile(
            self.profile, radius=self.radius, shingle_mode=self.shingle_mode,
            use_pair_bias=self.use_pair_bias, use_geometric=self.use_geometric,
            use_structural=self.use_structural, dropout=self.dropout, dtype=self.dtype,
            task=self._task, n_outputs=n_outputs, seed=self.random_state)
        tcfg = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr_init=self.lr_init,
            lr_min=self.lr_min, warmup_steps=self.warmup_steps, warmup_lr=self.warmup_lr,
            dropout=self.dropout, seed=self.random_state, task=self._task, eval_every=0)
        return mcfg, tcfg

    def _fit(self, rxns, targets, n_outputs: int):
        mcfg, tcfg = self._configs(n_outputs)
        model = ShingleTransformer(mcfg)
        items = [LabeledReaction(r, t) for r, t in zip(rxns, targets.tolist())]
        self.model_, self.report_ = finetune(model, DatasetSplit(items, []), tcfg)
        # the best-epoch selection uses training metrics here; keep the last epoch instead
        self.model_ = model
        return self


class ShingleRegressor(RegressorMixin, _ShingleModel):
    """Pair-biased shingle transformer for scalar reaction properties (e.g. yield)."""

    _task = "regression"

    def fit(self, X, y):
        rxns = check_reactions(X)
        return self._fit(rxns, check_labels(y, len(rxns)), 1)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.predict(check_reactions(X))


class ShingleClassifier(ClassifierMixin, _ShingleModel):
    """Pair-biased shingle transformer for reaction classes."""

    _task = "classification"

    def fit(self, X, y):
        rxns = check_reactions(X)
        y = check_labels(y, len(rxns), "classification")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        return self._fit(rxns, encoded.astype(np.int64), len(self.classes_))

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.classes_[self.model_.predict(check_reactions(X))]
