"""Unsupervised (fixation index) and supervised (Gini) random forests.

Trees are stored as explicit node lists so that the feature-graph builder
can walk parent/child pairs. Split search is vectorised over all candidate
features of a node: columns are sorted once and every admissible threshold
is scored from prefix sums.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Node",
    "Tree",
    "ForestParams",
    "Forest",
    "AffinityMatrix",
    "fixation_split_score",
    "fixation_index",
    "best_split",
    "best_gini_split",
    "gini_impurity",
    "grow_tree",
    "train_unsupervised_forest",
    "train_supervised_forest",
    "gini_importance",
    "compute_affinity",
    "forest_to_dict",
    "forest_from_dict",
]

UNSUPERVISED = "unsupervised_fixation"
SUPERVISED = "supervised_gini"
FOREST_FORMAT = "forestgraph.forest"
FOREST_VERSION = 1

# Gini decreases below this are rounding noise from identical class mixes.
_GINI_EPS = 1e-12


@dataclass
class Node:
    id: int
    depth: int
    n_inbag: int
    split_feature: Optional[int] = None
    split_threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None
    fixation_score: Optional[float] = None
    impurity_decrease: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return self.split_feature is None


@dataclass
class Tree:
    nodes: list
    inbag_counts: np.ndarray
    root_id: int = 0

    def __post_init__(self):
        self._arrays = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def internal_nodes(self):
        return [nd for nd in self.nodes if not nd.is_leaf]

    def arrays(self):
        """(feature, threshold, left, right) arrays; -1 marks leaves."""
        if self._arrays is None:
            k = len(self.nodes)
            feat = np.full(k, -1, dtype=np.intp)
            thr = np.zeros(k)
            left = np.full(k, -1, dtype=np.intp)
            right = np.full(k, -1, dtype=np.intp)
            for nd in self.nodes:
                if not nd.is_leaf:
                    feat[nd.id] = nd.split_feature
                    thr[nd.id] = nd.split_threshold
                    left[nd.id] = nd.left
                    right[nd.id] = nd.right
            self._arrays = (feat, thr, left, right)
        return self._arrays

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by each row of ``X``."""
        feat, thr, left, right = self.arrays()
        pos = np.full(X.shape[0], self.root_id, dtype=np.intp)
        rows = np.arange(X.shape[0])
        active = feat[pos] >= 0
        while active.any():
            r = rows[active]
            p = pos[r]
            go_left = X[r, feat[p]] <= thr[p]
            pos[r] = np.where(go_left, left[p], right[p])
            active = feat[pos] >= 0
        return pos

    def node_label_counts(self, X: np.ndarray, labels: np.ndarray, n_labels: int,
                          weights: Optional[np.ndarray] = None) -> np.ndarray:
        """Counts of routed rows per (node, label); rows are counted at every node on their path.

        ``weights`` scales each row's contribution (e.g. in-bag multiplicities).
        """
        w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
        feat, thr, left, right = self.arrays()
        counts = np.zeros((len(self.nodes), n_labels))
        pos = np.full(X.shape[0], self.root_id, dtype=np.intp)
        rows = np.arange(X.shape[0])
        np.add.at(counts, (pos, labels), w)
        active = feat[pos] >= 0
        while active.any():
            r = rows[active]
            p = pos[r]
            go_left = X[r, feat[p]] <= thr[p]
            pos[r] = np.where(go_left, left[p], right[p])
            np.add.at(counts, (pos[r], labels[r]), w[r])
            active = feat[pos] >= 0
        return counts


@dataclass(frozen=True)
class ForestParams:
    """Growth settings shared by both forest modes.

    ``mtry=None`` resolves to ceil(sqrt(d)) at training time. With
    ``bootstrap`` off, each tree sees a ``sample_fraction`` subsample drawn
    without replacement (1.0 = every sample once).
    """

    n_trees: int = 100
    min_leaf_size: int = 5
    mtry: Optional[int] = None
    bootstrap: bool = True
    max_depth: Optional[int] = None
    seed: int = 0
    sample_fraction: float = 1.0

    def validate(self, d: int) -> int:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValueError("sample_fraction must be in (0, 1]")
        mtry = self.resolved_mtry(d)
        if not 1 <= mtry <= d:
            raise ValueError(f"mtry must be in [1, {d}], got {mtry}")
        return mtry

    def resolved_mtry(self, d: int) -> int:
        return int(math.ceil(math.sqrt(d))) if self.mtry is None else int(self.mtry)

    def tree_seeds(self) -> list:
        state = np.random.SeedSequence(self.seed).generate_state(self.n_trees, dtype=np.uint64)
        return [int(s) for s in state]


@dataclass
class Forest:
    trees: list
    params: ForestParams
    mode: str
    feature_names: tuple
    n_classes: Optional[int] = None

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """n x n_trees matrix of leaf ids."""
        X = self._check_X(X)
        return np.column_stack([t.apply(X) for t in self.trees])

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(getattr(X, "values", X), dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"forest was trained on {self.n_features} features, got input of shape {X.shape}"
            )
        return X


@dataclass(frozen=True)
class AffinityMatrix:
    values: np.ndarray
    n_trees_counted: int


def _centered_prefix(V: np.ndarray):
    """Per-column prefix stats of sorted columns, shifted by the column mean."""
    V = V - V.mean(axis=0)
    cs = np.cumsum(V, axis=0)
    cq = np.cumsum(V * V, axis=0)
    return V, cs, cq


def _fixation_scores(V: np.ndarray, min_leaf: int):
    """Fixation scores for every cut of each sorted column of ``V``.

    Row ``a - 1`` of the result is the split with the ``a`` smallest values
    on the left. Inadmissible cuts (ties across the cut or a child smaller
    than ``min_leaf``) are -inf.
    """
    m = V.shape[0]
    Vc, cs, cq = _centered_prefix(V)
    a = np.arange(1, m, dtype=np.float64)[:, None]
    b = m - a
    S_L, Q_L = cs[:-1], cq[:-1]
    S_R, Q_R = cs[-1] - S_L, cq[-1] - Q_L
    ss_l = np.maximum(Q_L - S_L * S_L / a, 0.0)
    ss_r = np.maximum(Q_R - S_R * S_R / b, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        within_l = np.where(a > 1, 2.0 * ss_l / (a - 1), 0.0)
        within_r = np.where(b > 1, 2.0 * ss_r / (b - 1), 0.0)
        gap = S_L / a - S_R / b
        between = ss_l / a + ss_r / b + gap * gap
        score = np.where(between > 0, 1.0 - 0.5 * (within_l + within_r) / between, 0.0)
    valid = V[1:] > V[:-1]
    cut = np.arange(1, m)[:, None]
    valid &= (cut >= min_leaf) & (m - cut >= min_leaf)
    return np.where(valid, score, -np.inf)


def _midpoint(lo: float, hi: float) -> float:
    mid = lo + (hi - lo) / 2.0
    # adjacent floats: the midpoint can round onto hi
    return lo if mid >= hi else mid


def fixation_index(left_values: Sequence[float], right_values: Sequence[float]) -> float:
    """Mean within-child pairwise squared distance over mean cross-child distance.

    Lower is better. Singleton children contribute zero within-distance.
    Returns ``inf`` when the cross-child distance is zero.
    """
    left = np.asarray(left_values, dtype=np.float64)
    right = np.asarray(right_values, dtype=np.float64)
    if left.size == 0 or right.size == 0:
        raise ValueError("both sides of a split must be non-empty")
    a, b = left.size, right.size
    shift = np.concatenate([left, right]).mean()
    left, right = left - shift, right - shift
    ss_l = float(np.sum((left - left.mean()) ** 2))
    ss_r = float(np.sum((right - right.mean()) ** 2))
    within_l = 2.0 * ss_l / (a - 1) if a > 1 else 0.0
    within_r = 2.0 * ss_r / (b - 1) if b > 1 else 0.0
    between = ss_l / a + ss_r / b + (left.mean() - right.mean()) ** 2
    if between <= 0:
        return math.inf
    return 0.5 * (within_l + within_r) / between


def fixation_split_score(left_values: Sequence[float], right_values: Sequence[float]) -> float:
    """Oriented fixation score ``1 - fixation_index``; 0 when the children coincide."""
    fi = fixation_index(left_values, right_values)
    return 0.0 if math.isinf(fi) else 1.0 - fi


def best_split(sample_values, candidate_features: Sequence[int], min_leaf_size: int = 5):
    """Best fixation split over ``candidate_features`` of the node's rows.

    Returns ``(feature, threshold, score)`` or ``None`` when no admissible
    split has a positive score. Ties go to the lower feature index, then the
    lower threshold.
    """
    X = np.asarray(sample_values, dtype=np.float64)
    feats = sorted(int(f) for f in candidate_features)
    m = X.shape[0]
    if m < 2 * min_leaf_size or not feats:
        return None
    V = np.sort(X[:, feats], axis=0)
    scores = _fixation_scores(V, min_leaf_size)
    return _pick(V, scores, feats)


def _pick(V, scores, feats, eps=0.0):
    # feature-major flattening: first maximum = lowest feature, lowest threshold
    flat = scores.T.ravel()
    k = int(np.argmax(flat))
    best = flat[k]
    if not np.isfinite(best) or best <= eps:
        return None
    col, row = divmod(k, scores.shape[0])
    thr = _midpoint(V[row, col], V[row + 1, col])
    return feats[col], float(thr), float(best)


def gini_impurity(labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    _, counts = np.unique(labels, return_counts=True)
    p = counts / labels.size
    return float(1.0 - np.sum(p * p))


def best_gini_split(sample_values, y, n_classes: int, candidate_features: Sequence[int], min_leaf_size: int = 5):
    """Split maximising the weighted Gini decrease ``I - (N_L I_L + N_R I_R) / N``."""
    X = np.asarray(sample_values, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    feats = sorted(int(f) for f in candidate_features)
    m = X.shape[0]
    if m < 2 * min_leaf_size or not feats:
        return None
    cols = X[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    V = np.take_along_axis(cols, order, axis=0)
    onehot = np.eye(n_classes)[y]
    left_counts = np.cumsum(onehot[order], axis=0)[:-1]  # (m-1, f, K)
    total = onehot.sum(axis=0)
    a = np.arange(1, m, dtype=np.float64)[:, None]
    b = m - a
    right_counts = total - left_counts
    gini_l = 1.0 - np.sum(left_counts**2, axis=2) / (a * a)
    gini_r = 1.0 - np.sum(right_counts**2, axis=2) / (b * b)
    parent = 1.0 - np.sum(total**2) / (m * m)
    dec = parent - (a * gini_l + b * gini_r) / m
    valid = V[1:] > V[:-1]
    cut = np.arange(1, m)[:, None]
    valid &= (cut >= min_leaf_size) & (m - cut >= min_leaf_size)
    scores = np.where(valid, dec, -np.inf)
    return _pick(V, scores, feats, eps=_GINI_EPS)


def _draw_rows(n: int, params: ForestParams, rng: np.random.Generator) -> np.ndarray:
    if params.bootstrap:
        return np.sort(rng.integers(0, n, size=n))
    if params.sample_fraction < 1.0:
        size = max(1, int(round(params.sample_fraction * n)))
        return np.sort(rng.choice(n, size=size, replace=False))
    return np.arange(n)


def grow_tree(ds, params: ForestParams, tree_seed: int, y=None, n_classes: Optional[int] = None) -> Tree:
    """Grow one tree; fixation splits when ``y`` is None, Gini splits otherwise."""
    X = np.asarray(getattr(ds, "values", ds), dtype=np.float64)
    n, d = X.shape
    mtry = params.validate(d)
    rng = np.random.default_rng(tree_seed)
    rows = _draw_rows(n, params, rng)
    L = params.min_leaf_size
    supervised = y is not None
    if supervised:
        y = np.asarray(y, dtype=np.intp)

    nodes = [Node(id=0, depth=0, n_inbag=len(rows))]
    stack = [(0, rows)]
    while stack:
        nid, idx = stack.pop()
        node = nodes[nid]
        if len(idx) < 2 * L:
            continue
        if params.max_depth is not None and node.depth >= params.max_depth:
            continue
        if supervised and np.all(y[idx] == y[idx[0]]):
            continue
        feats = rng.choice(d, size=mtry, replace=False)
        Xn = X[idx]
        if supervised:
            found = best_gini_split(Xn, y[idx], n_classes, feats, L)
        else:
            found = best_split(Xn, feats, L)
        if found is None:
            continue
        f, thr, score = found
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        node.split_feature, node.split_threshold = f, thr
        if supervised:
            node.impurity_decrease = score
        else:
            node.fixation_score = score
        node.left, node.right = len(nodes), len(nodes) + 1
        nodes.append(Node(id=node.left, depth=node.depth + 1, n_inbag=len(li)))
        nodes.append(Node(id=node.right, depth=node.depth + 1, n_inbag=len(ri)))
        # right pushed first so the left subtree is expanded first
        stack.append((node.right, ri))
        stack.append((node.left, li))
    return Tree(nodes=nodes, inbag_counts=np.bincount(rows, minlength=n))


def train_unsupervised_forest(ds, params: ForestParams) -> Forest:
    """Grow ``params.n_trees`` fixation-index trees with seeds derived from ``params.seed``."""
    X = np.asarray(getattr(ds, "values", ds), dtype=np.float64)
    params.validate(X.shape[1])
    trees = [grow_tree(X, params, s) for s in params.tree_seeds()]
    return Forest(trees, params, UNSUPERVISED, _names(ds, X.shape[1]))


def train_supervised_forest(ds, labels, params: ForestParams) -> Forest:
    """Gini forest on the given (typically predicted cluster) labels."""
    X = np.asarray(getattr(ds, "values", ds), dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape != (X.shape[0],):
        raise ValueError(f"labels have length {labels.shape[0]}, data has {X.shape[0]} rows")
    params.validate(X.shape[1])
    _, y = np.unique(labels, return_inverse=True)
    k = int(y.max()) + 1
    trees = [grow_tree(X, params, s, y=y, n_classes=k) for s in params.tree_seeds()]
    return Forest(trees, params, SUPERVISED, _names(ds, X.shape[1]), n_classes=k)


def _names(ds, d: int) -> tuple:
    names = getattr(ds, "feature_names", None)
    return tuple(names) if names is not None else tuple(f"V{j + 1}" for j in range(d))


def gini_importance(forest: Forest) -> np.ndarray:
    """Mean over trees of sum_{nodes on j} N(node)/N(root) * Gini decrease."""
    if forest.mode != SUPERVISED:
        raise ValueError("gini_importance needs a supervised_gini forest")
    imp = np.zeros(forest.n_features)
    for tree in forest.trees:
        n_root = tree.nodes[tree.root_id].n_inbag
        for nd in tree.internal_nodes():
            imp[nd.split_feature] += nd.n_inbag / n_root * nd.impurity_decrease
    return imp / len(forest.trees)


def compute_affinity(forest: Forest, ds) -> AffinityMatrix:
    """Fraction of trees in which each pair of samples shares a leaf.

    All rows are routed through every tree, out-of-bag ones included.
    """
    leaves = forest.apply(ds)
    n = leaves.shape[0]
    counts = np.zeros((n, n))
    for t in range(leaves.shape[1]):
        col = leaves[:, t]
        counts += col[:, None] == col[None, :]
    return AffinityMatrix(values=counts / leaves.shape[1], n_trees_counted=leaves.shape[1])


def forest_to_dict(forest: Forest) -> dict:
    return {
        "format": FOREST_FORMAT,
        "version": FOREST_VERSION,
        "mode": forest.mode,
        "feature_names": list(forest.feature_names),
        "n_classes": forest.n_classes,
        "params": asdict(forest.params),
        "trees": [
            {
                "root_id": t.root_id,
                "inbag_counts": [int(c) for c in t.inbag_counts],
                "nodes": [asdict(nd) for nd in t.nodes],
            }
            for t in forest.trees
        ],
    }


def forest_from_dict(doc: dict) -> Forest:
    if doc.get("format") != FOREST_FORMAT:
        raise ValueError("not a forest document")
    if doc.get("version") != FOREST_VERSION:
        raise ValueError(f"unsupported forest document version {doc.get('version')}")
    trees = [
        Tree(
            nodes=[Node(**nd) for nd in t["nodes"]],
            inbag_counts=np.asarray(t["inbag_counts"], dtype=np.intp),
            root_id=t["root_id"],
        )
        for t in doc["trees"]
    ]
    return Forest(
        trees=trees,
        params=ForestParams(**doc["params"]),
        mode=doc["mode"],
        feature_names=tuple(doc["feature_names"]),
        n_classes=doc.get("n_classes"),
    )
