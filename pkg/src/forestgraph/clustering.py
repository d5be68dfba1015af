"""Ward clustering of forest distances and the evaluation statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = [
    "ClusterAssignment",
    "Dendrogram",
    "affinity_to_distance",
    "ward_linkage",
    "cut_dendrogram",
    "ward_cluster",
    "adjusted_rand_index",
    "pearson_correlation",
    "welch_t_test",
]


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    p: int


@dataclass(frozen=True)
class Dendrogram:
    """Merges as rows ``(cluster_a, cluster_b, height, merged_size)``.

    Leaves are clusters ``0..n-1``; merge ``i`` creates cluster ``n + i``
    (the scipy linkage convention).
    """

    merges: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.merges.shape[0] + 1

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "merges": [
                {"a": int(a), "b": int(b), "height": float(h), "size": int(s)}
                for a, b, h, s in self.merges
            ],
        }


def affinity_to_distance(aff) -> np.ndarray:
    values = np.asarray(getattr(aff, "values", aff), dtype=np.float64)
    dist = 1.0 - values
    np.fill_diagonal(dist, 0.0)
    return dist


def _check_distance(dist) -> np.ndarray:
    D = np.asarray(dist, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12):
        raise ValueError("distance matrix must be symmetric")
    if np.any(np.abs(np.diag(D)) > 1e-12):
        raise ValueError("distance matrix must have a zero diagonal")
    return D


def ward_linkage(dist) -> Dendrogram:
    """Agglomerative Ward linkage by the Lance-Williams recurrence.

    The recurrence runs on squared distances and heights are reported as
    their square roots, as for Euclidean input. Negative squared values that
    non-Euclidean input can produce are clamped to zero. Equal-distance
    candidates are resolved by the smallest (a, b) cluster-id pair.
    """
    D = _check_distance(dist)
    n = D.shape[0]
    sq = D * D
    np.fill_diagonal(sq, np.inf)
    ids = np.arange(n)  # cluster id held by each slot
    size = np.ones(n)
    alive = np.ones(n, dtype=bool)
    merges = np.zeros((max(n - 1, 0), 4))
    for step in range(n - 1):
        best = sq.min()
        ii, jj = np.nonzero(sq == best)
        pairs = sorted(
            (min(ids[i], ids[j]), max(ids[i], ids[j]), i, j) for i, j in zip(ii, jj) if i < j
        )
        a, b, i, j = pairs[0]
        ni, nj = size[i], size[j]
        nk = size
        upd = ((ni + nk) * sq[i] + (nj + nk) * sq[j] - nk * best) / (ni + nj + nk)
        upd = np.maximum(upd, 0.0)
        upd[~alive] = np.inf
        upd[i] = upd[j] = np.inf
        sq[i, :] = upd
        sq[:, i] = upd
        sq[j, :] = np.inf
        sq[:, j] = np.inf
        alive[j] = False
        size[i] = ni + nj
        merges[step] = (a, b, math.sqrt(best), ni + nj)
        ids[i] = n + step
    return Dendrogram(merges)


def cut_dendrogram(dendro: Dendrogram, p: int) -> np.ndarray:
    """Labels after applying the first ``n - p`` merges, numbered by first occurrence."""
    n = dendro.n_samples
    if not 1 <= p <= n:
        raise ValueError(f"cannot cut {n} samples into {p} clusters")
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in range(n - p):
        a, b = int(dendro.merges[step, 0]), int(dendro.merges[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    roots = [find(i) for i in range(n)]
    code: dict = {}
    return np.array([code.setdefault(r, len(code)) for r in roots], dtype=int)


def ward_cluster(dist, p: int):
    """Ward linkage cut into exactly ``p`` clusters; returns (assignment, dendrogram)."""
    D = _check_distance(dist)
    if not 1 <= p <= D.shape[0]:
        raise ValueError(f"p must be in [1, {D.shape[0]}], got {p}")
    dendro = ward_linkage(D)
    labels = cut_dendrogram(dendro, p)
    return ClusterAssignment(labels=labels, p=p), dendro


def _pairs(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected Rand index from the contingency table.

    When both partitions are trivial (max index equals its expectation) the
    result is 1.0.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label vectors must have equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    index = _pairs(table).sum()
    sa = _pairs(table.sum(axis=1)).sum()
    sb = _pairs(table.sum(axis=0)).sum()
    expected = sa * sb / (n * (n - 1) / 2.0)
    max_index = (sa + sb) / 2.0
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def pearson_correlation(x, y):
    """Sample Pearson r with a two-sided t-distribution p-value (n - 2 dof)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be vectors of equal length")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 observations")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ValueError("correlation is undefined for a constant vector")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, float(2.0 * stats.t.sf(abs(t), n - 2))


def welch_t_test(x, y):
    """Unequal-variance t statistic and two-sided Welch-Satterthwaite p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2 or y.size < 2:
        raise ValueError("each sample needs at least 2 observations")
    vx, vy = x.var(ddof=1) / x.size, y.var(ddof=1) / y.size
    se2 = vx + vy
    if se2 == 0:
        raise ValueError("both samples have zero variance")
    t = (x.mean() - y.mean()) / math.sqrt(se2)
    df = se2 * se2 / (vx * vx / (x.size - 1) + vy * vy / (y.size - 1))
    return float(t), float(2.0 * stats.t.sf(abs(t), df))
