"""scikit-learn style wrappers around the forest, clustering and selection code."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin, TransformerMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .clustering import affinity_to_distance, ward_cluster
from .dataset import Dataset
from .feature_graph import CRITERIA, build_graph
from .forest import (
    ForestParams,
    compute_affinity,
    gini_importance,
    train_supervised_forest,
    train_unsupervised_forest,
)
from .graph_mining import brute_force_select, greedy_select, out_degree_centrality

__all__ = [
    "UnsupervisedRandomForest",
    "ForestWardClustering",
    "GiniForestClassifier",
    "FeatureGraphSelector",
]


def _as_dataset(X, feature_names=None) -> Dataset:
    n, d = X.shape
    names = feature_names if feature_names is not None else [f"V{j + 1}" for j in range(d)]
    return Dataset(X, names, [f"s{i}" for i in range(n)])


class _ForestParamsMixin:
    def _params(self) -> ForestParams:
        return ForestParams(
            n_trees=self.n_estimators,
            min_leaf_size=self.min_samples_leaf,
            mtry=self.max_features,
            bootstrap=self.bootstrap,
            max_depth=self.max_depth,
            seed=self.random_state,
        )


class UnsupervisedRandomForest(_ForestParamsMixin, TransformerMixin, BaseEstimator):
    """Label-free forest split on the fixation-index score.

    ``transform`` returns leaf ids (n_samples, n_estimators); ``affinity``
    returns the co-leaf fraction matrix.
    """

    def __init__(self, n_estimators=100, min_samples_leaf=5, max_features=None,
                 bootstrap=True, max_depth=None, random_state=0):
        self.n_estimators = n_estimators
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.max_depth = max_depth
        self.random_state = random_state

    def fit(self, X, y=None, feature_names=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.forest_ = train_unsupervised_forest(_as_dataset(X, feature_names), self._params())
        return self

    def apply(self, X) -> np.ndarray:
        check_is_fitted(self, "forest_")
        return self.forest_.apply(check_array(X, dtype=np.float64))

    def transform(self, X) -> np.ndarray:
        return self.apply(X)

    def affinity(self, X) -> np.ndarray:
        check_is_fitted(self, "forest_")
        return compute_affinity(self.forest_, check_array(X, dtype=np.float64)).values

    def feature_graph(self, criterion: str = "sample"):
        check_is_fitted(self, "forest_")
        return build_graph(self.forest_, criterion)


class ForestWardClustering(ClusterMixin, BaseEstimator):
    """Ward clustering of ``1 - affinity`` from an unsupervised forest."""

    def __init__(self, n_clusters=2, n_estimators=100, min_samples_leaf=5, max_features=None,
                 bootstrap=True, max_depth=None, random_state=0):
        self.n_clusters = n_clusters
        self.n_estimators = n_estimators
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.max_depth = max_depth
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.forest_model_ = UnsupervisedRandomForest(
            self.n_estimators, self.min_samples_leaf, self.max_features,
            self.bootstrap, self.max_depth, self.random_state,
        ).fit(X)
        self.affinity_ = self.forest_model_.affinity(X)
        assignment, self.dendrogram_ = ward_cluster(affinity_to_distance(self.affinity_), self.n_clusters)
        self.labels_ = assignment.labels
        self.n_features_in_ = X.shape[1]
        return self


class GiniForestClassifier(_ForestParamsMixin, ClassifierMixin, BaseEstimator):
    """Supervised Gini forest; ``feature_importances_`` is the mean decrease in impurity."""

    def __init__(self, n_estimators=100, min_samples_leaf=5, max_features=None,
                 bootstrap=True, max_depth=None, random_state=0):
        self.n_estimators = n_estimators
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.max_depth = max_depth
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, codes = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        self.forest_ = train_supervised_forest(_as_dataset(X), codes, self._params())
        self.feature_importances_ = gini_importance(self.forest_)
        # majority class per leaf, from in-bag training labels
        self._leaf_votes = []
        for tree in self.forest_.trees:
            counts = tree.node_label_counts(X, codes, len(self.classes_), weights=tree.inbag_counts)
            self._leaf_votes.append(counts)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "forest_")
        X = check_array(X, dtype=np.float64)
        leaves = self.forest_.apply(X)
        proba = np.zeros((X.shape[0], len(self.classes_)))
        for t, counts in enumerate(self._leaf_votes):
            c = counts[leaves[:, t]]
            tot = c.sum(axis=1, keepdims=True)
            proba += np.divide(c, tot, out=np.zeros_like(c), where=tot > 0)
        return proba / len(self._leaf_votes)

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class FeatureGraphSelector(SelectorMixin, BaseEstimator):
    """Select ``k`` features as the heaviest connected subgraph of a forest feature graph.

    ``feature_importances_`` holds out-degree centrality; ``selected_`` holds
    the chosen indices in selection order.
    """

    def __init__(self, k=2, criterion="sample", method="greedy", objective="max_AW",
                 n_estimators=100, min_samples_leaf=5, max_features=None, random_state=0,
                 estimator: Optional[UnsupervisedRandomForest] = None):
        self.k = k
        self.criterion = criterion
        self.method = method
        self.objective = objective
        self.n_estimators = n_estimators
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.random_state = random_state
        self.estimator = estimator

    def fit(self, X, y=None):
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if self.method not in ("greedy", "brute"):
            raise ValueError("method must be 'greedy' or 'brute'")
        X = check_array(X, dtype=np.float64)
        if not 2 <= self.k <= X.shape[1]:
            raise ValueError(f"k must be in [2, {X.shape[1]}]")
        est = self.estimator
        if est is None:
            est = UnsupervisedRandomForest(self.n_estimators, self.min_samples_leaf,
                                           self.max_features, random_state=self.random_state)
        self.estimator_ = est.fit(X)
        self.graph_ = self.estimator_.feature_graph(self.criterion)
        self.feature_importances_ = out_degree_centrality(self.graph_)
        if self.method == "greedy":
            res = greedy_select(self.graph_, self.k)
        else:
            res = brute_force_select(self.graph_, self.k, self.objective, strict=False)
        self.selection_ = res
        self.selected_ = list(res.selected)
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "selected_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selected_] = True
        return mask
