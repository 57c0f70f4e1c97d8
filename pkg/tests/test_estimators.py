import numpy as np
import pytest
from sklearn.base import clone

from rxnshingle.estimators import DRFPFeaturizer, DRFPKMeans, ShingleClassifier, ShingleRegressor
from rxnshingle.exceptions import EmptyDataset, LengthMismatch
from rxnshingle.synthetic import random_reactions

SMILES = ["CCO>>CC=O", "CC(=O)O.OCC>>CC(=O)OCC.O", "c1ccccc1Br>>c1ccccc1O", "C=C>>CC",
          "CBr.N>>CN.Br", "CC#N>>CCN"]


def test_featurizer():
    f = DRFPFeaturizer(radius=2, n_bits=256)
    x = f.fit_transform(SMILES)
    assert x.shape == (6, 256) and set(np.unique(x)) <= {0, 1}
    assert len(f.get_feature_names_out()) == 256
    assert clone(f).get_params() == {"radius": 2, "n_bits": 256}
    with pytest.raises(EmptyDataset):
        f.transform([])
    with pytest.raises(TypeError):
        f.transform("CCO>>CC")


def test_kmeans_estimator():
    x = DRFPFeaturizer().fit_transform([r for r in random_reactions(40, seed=1)])
    km = DRFPKMeans(n_clusters=4, random_state=2).fit(x)
    assert km.labels_.shape == (40,)
    assert np.array_equal(km.predict(x), km.labels_)
    assert np.array_equal(DRFPKMeans(4, 2).fit_predict(x), km.labels_)


def test_regressor():
    reg = ShingleRegressor(radius=2, epochs=3, batch_size=3, warmup_steps=1)
    y = np.arange(6, dtype=float)
    reg.fit(SMILES, y)
    pred = reg.predict(SMILES)
    assert pred.shape == (6,) and np.all(np.isfinite(pred))
    assert isinstance(reg.score(SMILES, y), float)
    assert clone(reg).get_params()["epochs"] == 3
    with pytest.raises(LengthMismatch):
        reg.fit(SMILES, y[:3])


def test_classifier_labels():
    clf = ShingleClassifier(radius=2, epochs=2, batch_size=3, warmup_steps=1)
    y = np.array(["a", "b", "a", "c", "b", "a"])
    clf.fit(SMILES, y)
    assert list(clf.classes_) == ["a", "b", "c"]
    assert set(clf.predict(SMILES)) <= {"a", "b", "c"}
