import numpy as np
import pytest
from sklearn.base import clone
from sklearn.datasets import load_iris
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from forestgraph.clustering import adjusted_rand_index
from forestgraph.estimators import (
    FeatureGraphSelector,
    ForestWardClustering,
    GiniForestClassifier,
    UnsupervisedRandomForest,
)


@pytest.fixture(scope="module")
def iris():
    return load_iris(return_X_y=True)


def test_params_round_trip():
    est = FeatureGraphSelector(k=3, criterion="level", n_estimators=7)
    params = est.get_params()
    assert params["k"] == 3 and params["criterion"] == "level"
    assert clone(est).get_params() == params


def test_unsupervised_forest(iris):
    X, _ = iris
    est = UnsupervisedRandomForest(n_estimators=10, random_state=1).fit(X)
    leaves = est.transform(X)
    assert leaves.shape == (150, 10)
    A = est.affinity(X[:20])
    np.testing.assert_array_equal(np.diag(A), 1.0)
    with pytest.raises(ValueError):
        est.apply(X[:, :2])
    with pytest.raises(NotFittedError):
        UnsupervisedRandomForest().apply(X)


def test_clustering(iris):
    X, y = iris
    labels = ForestWardClustering(n_clusters=3, n_estimators=50).fit_predict(X)
    assert len(set(labels.tolist())) == 3
    assert adjusted_rand_index(y, labels) > 0.5


def test_classifier(iris):
    X, y = iris
    clf = GiniForestClassifier(n_estimators=20, random_state=0).fit(X, y)
    assert clf.score(X, y) > 0.9
    proba = clf.predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert clf.feature_importances_.argmax() in (2, 3)


def test_selector_in_pipeline(iris):
    X, _ = iris
    pipe = make_pipeline(FeatureGraphSelector(k=2, n_estimators=30), ForestWardClustering(3, n_estimators=20))
    pipe.fit(X)
    sel = pipe[0]
    assert sel.get_support().sum() == 2
    assert sel.transform(X).shape == (150, 2)
    assert sel.feature_importances_.shape == (4,)


@pytest.mark.parametrize("bad", [dict(k=1), dict(k=5), dict(criterion="x"), dict(method="x")])
def test_selector_rejects(iris, bad):
    with pytest.raises(ValueError):
        FeatureGraphSelector(n_estimators=5, **bad).fit(iris[0])
