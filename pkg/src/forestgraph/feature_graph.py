"""Weighted directed feature graphs built from parent/child splits of a forest."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx
import numpy as np

from .forest import SUPERVISED, Forest, Node

__all__ = [
    "CRITERIA",
    "LEAF",
    "DirectedFeatureGraph",
    "UndirectedFeatureGraph",
    "edge_quantity",
    "build_graph",
    "cluster_specific_graphs",
    "average_graphs",
    "to_undirected",
    "export_graph",
    "import_graph",
]

CRITERIA = ("present", "fixation", "level", "sample")
LEAF = "l"
EXPORT_FORMATS = ("adjacency_csv", "dot", "graphml", "json")


@dataclass
class DirectedFeatureGraph:
    """Adjacency over the d features plus the leaf vertex ``l`` (last row/column)."""

    feature_names: tuple
    adjacency: np.ndarray
    criterion: str
    cluster: Optional[int] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        d = len(self.feature_names)
        if self.adjacency.shape != (d + 1, d + 1):
            raise ValueError(f"adjacency must be {(d + 1, d + 1)}, got {self.adjacency.shape}")

    @property
    def vertices(self) -> tuple:
        return self.feature_names + (LEAF,)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


@dataclass
class UndirectedFeatureGraph:
    """Feature-only projection: symmetric weights, zero diagonal, no leaf vertex."""

    feature_names: tuple
    weights: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        self.weights = np.asarray(self.weights, dtype=np.float64)

    @property
    def vertices(self) -> tuple:
        return self.feature_names

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def neighbors(self, i: int) -> np.ndarray:
        return np.nonzero(self.weights[i] > 0)[0]


def edge_quantity(node: Node, child: Node, criterion: str, n_root: Optional[int] = None,
                  fixation: str = "score") -> float:
    """Contribution of one parent -> child edge under ``criterion``.

    ``fixation="score"`` uses the oriented split score clamped at 0;
    ``fixation="raw"`` uses the raw within/between fixation index.
    ``n_root`` (in-bag size of the root) is needed for the sample criterion.
    """
    if node.is_leaf:
        raise ValueError("edge_quantity needs an internal parent node")
    if criterion == "present":
        return 1.0
    if criterion == "level":
        return 1.0 / child.depth
    if criterion == "sample":
        if n_root is None:
            raise ValueError("the sample criterion needs the root's in-bag size")
        return child.n_inbag / n_root
    if criterion == "fixation":
        if node.fixation_score is None:
            raise ValueError("fixation criterion needs a fixation-index forest")
        if fixation == "raw":
            return 1.0 - node.fixation_score
        return max(0.0, node.fixation_score)
    raise ValueError(f"unknown criterion {criterion!r}; choose from {CRITERIA}")


def _accumulate(forest: Forest, criterion: str, fixation: str, factors=None) -> np.ndarray:
    """Sum edge quantities over all trees; ``factors[t]`` is (n_nodes, p) cluster fractions per child."""
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; choose from {CRITERIA}")
    if criterion == "fixation" and forest.mode == SUPERVISED:
        raise ValueError("fixation criterion needs a fixation-index forest")
    d = forest.n_features
    p = 1 if factors is None else factors[0].shape[1]
    A = np.zeros((p, d + 1, d + 1))
    for t, tree in enumerate(forest.trees):
        n_root = tree.nodes[tree.root_id].n_inbag
        for node in tree.nodes:
            if node.is_leaf:
                continue
            for cid in (node.left, node.right):
                child = tree.nodes[cid]
                q = edge_quantity(node, child, criterion, n_root, fixation)
                col = d if child.is_leaf else child.split_feature
                if factors is None:
                    A[0, node.split_feature, col] += q
                else:
                    A[:, node.split_feature, col] += q * factors[t][cid]
    return A


def _cluster_factors(forest: Forest, X: np.ndarray, labels: np.ndarray, p: int) -> list:
    out = []
    for tree in forest.trees:
        counts = tree.node_label_counts(X, labels, p)
        tot = counts.sum(axis=1, keepdims=True)
        # nodes no routed sample reaches contribute to no cluster
        out.append(np.divide(counts, tot, out=np.zeros_like(counts), where=tot > 0))
    return out


def _labels_for(assignment, n: int):
    labels = np.asarray(getattr(assignment, "labels", assignment))
    if labels.shape != (n,):
        raise ValueError(f"assignment covers {labels.shape[0]} samples, dataset has {n}")
    p = getattr(assignment, "p", None)
    if p is None:
        p = int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= p:
        raise ValueError("cluster labels must lie in [0, p)")
    return labels.astype(np.intp), int(p)


def _meta(criterion, fixation, clustered):
    meta = {"q_population": "in-bag counts"}
    if clustered:
        meta["f_population"] = "all samples routed"
    if criterion == "fixation":
        meta["fixation_weight"] = "1 - fixation index, clamped at 0" if fixation == "score" else "raw fixation index"
    return meta


def build_graph(forest: Forest, criterion: str, cluster_context=None, fixation: str = "score") -> DirectedFeatureGraph:
    """Feature graph of ``forest``; with ``cluster_context=(assignment, cluster, ds)``
    each edge is scaled by the fraction of the child's routed samples in that cluster."""
    if cluster_context is None:
        A = _accumulate(forest, criterion, fixation)[0]
        return DirectedFeatureGraph(forest.feature_names, A, criterion, None,
                                    _meta(criterion, fixation, False))
    assignment, cluster, ds = cluster_context
    graphs = cluster_specific_graphs(forest, criterion, assignment, ds, fixation)
    if cluster not in graphs:
        raise ValueError(f"cluster id {cluster} out of range")
    return graphs[cluster]


def cluster_specific_graphs(forest: Forest, criterion: str, assignment, ds, fixation: str = "score") -> dict:
    """One graph per cluster id; their element-wise sum is the overall graph."""
    X = forest._check_X(ds)
    labels, p = _labels_for(assignment, X.shape[0])
    factors = _cluster_factors(forest, X, labels, p)
    A = _accumulate(forest, criterion, fixation, factors)
    meta = _meta(criterion, fixation, True)
    return {
        c: DirectedFeatureGraph(forest.feature_names, A[c], criterion, c, dict(meta))
        for c in range(p)
    }


def average_graphs(graphs) -> DirectedFeatureGraph:
    graphs = list(graphs)
    if not graphs:
        raise ValueError("nothing to average")
    first = graphs[0]
    for g in graphs[1:]:
        if g.feature_names != first.feature_names or g.criterion != first.criterion:
            raise ValueError("graphs must share vertices and criterion")
    mean = np.mean([g.adjacency for g in graphs], axis=0)
    meta = dict(first.metadata, n_averaged=len(graphs))
    return DirectedFeatureGraph(first.feature_names, mean, first.criterion, first.cluster, meta)


def to_undirected(g) -> UndirectedFeatureGraph:
    """Drop ``l`` and self-edges; weight{i,j} = (A[i,j] + A[j,i]) / 2."""
    if isinstance(g, UndirectedFeatureGraph):
        W = g.weights
        meta = dict(g.metadata)
    else:
        d = g.n_features
        W = g.adjacency[:d, :d]
        meta = {"criterion": g.criterion, "cluster": g.cluster}
    W = (W + W.T) / 2.0
    W = W.copy()
    np.fill_diagonal(W, 0.0)
    return UndirectedFeatureGraph(g.feature_names, W, meta)


def _fmt(x: float) -> str:
    return repr(float(x))


def _matrix(g):
    return g.weights if isinstance(g, UndirectedFeatureGraph) else g.adjacency


def export_graph(g, format: str) -> str:
    """Serialise a directed or undirected feature graph to text."""
    if format not in EXPORT_FORMATS:
        raise ValueError(f"unsupported format {format!r}; choose from {EXPORT_FORMATS}")
    directed = isinstance(g, DirectedFeatureGraph)
    names = list(g.vertices)
    M = _matrix(g)
    if format == "json":
        doc = {"vertices": names, "matrix": M.tolist()}
        if directed:
            doc.update(type="directed", criterion=g.criterion, cluster=g.cluster)
        else:
            doc.update(type="undirected")
        doc["metadata"] = g.metadata
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if format == "adjacency_csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + names)
        for name, row in zip(names, M):
            w.writerow([name] + [_fmt(x) for x in row])
        return buf.getvalue()
    if format == "dot":
        kind, arrow = ("digraph", "->") if directed else ("graph", "--")
        lines = [f"{kind} feature_graph {{"]
        if directed:
            lines.append(f'  graph [criterion="{g.criterion}"' +
                         ("" if g.cluster is None else f', cluster="{g.cluster}"') + "];")
        for name in names:
            lines.append(f'  "{name}";')
        n = len(names)
        for i in range(n):
            for j in range(0 if directed else i + 1, n):
                if M[i, j] > 0:
                    lines.append(f'  "{names[i]}" {arrow} "{names[j]}" [weight={_fmt(M[i, j])}];')
        lines.append("}")
        return "\n".join(lines) + "\n"
    # graphml
    G = nx.DiGraph() if directed else nx.Graph()
    if directed:
        G.graph["criterion"] = g.criterion
        if g.cluster is not None:
            G.graph["cluster"] = int(g.cluster)
    G.add_nodes_from(names)
    n = len(names)
    for i in range(n):
        for j in range(n):
            if (directed or j > i) and M[i, j] > 0:
                G.add_edge(names[i], names[j], weight=float(M[i, j]))
    return "\n".join(nx.generate_graphml(G)) + "\n"


def import_graph(text: str, format: str, criterion: Optional[str] = None, cluster: Optional[int] = None):
    """Inverse of :func:`export_graph` for ``json`` and ``adjacency_csv``.

    An adjacency CSV whose last vertex is ``l`` is read as a directed graph
    (pass ``criterion``); otherwise as an undirected projection.
    """
    if format == "json":
        doc = json.loads(text)
        names = doc["vertices"]
        M = np.asarray(doc["matrix"], dtype=np.float64)
        if doc.get("type") == "undirected":
            return UndirectedFeatureGraph(names, M, doc.get("metadata", {}))
        return DirectedFeatureGraph(names[:-1], M, doc["criterion"], doc.get("cluster"),
                                    doc.get("metadata", {}))
    if format == "adjacency_csv":
        rows = list(csv.reader(io.StringIO(text)))
        names = rows[0][1:]
        M = np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=np.float64)
        M = M.reshape(len(names), len(names))
        if names and names[-1] == LEAF:
            return DirectedFeatureGraph(names[:-1], M, criterion or "unknown", cluster)
        return UndirectedFeatureGraph(names, M)
    raise ValueError(f"cannot import format {format!r}")
