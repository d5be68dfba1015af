"""Centrality ranking and top-k feature selection on feature graphs."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .feature_graph import DirectedFeatureGraph, UndirectedFeatureGraph, to_undirected

__all__ = [
    "SelectionResult",
    "BudgetExceeded",
    "out_degree_centrality",
    "connected_components",
    "subgraph_weight",
    "enumerate_connected_subsets",
    "brute_force_select",
    "brute_force_profile",
    "greedy_select",
    "knee_report",
]

DEFAULT_BUDGET = 10**7


class BudgetExceeded(RuntimeError):
    """Raised when brute-force enumeration would visit more subsets than allowed."""


@dataclass
class SelectionResult:
    """Selected vertices in selection order with the two weight traces.

    ``avg[i]`` is the average weight of the subgraph induced by the first
    ``i + 2`` selected vertices; ``avg_n[i]`` is the average weight of the
    edges joining vertex ``i + 1`` to those before it.
    """

    selected: list
    avg: list
    avg_n: list
    method: str
    component_restricted: bool = False
    feature_names: tuple = ()
    objective: Optional[str] = None
    other_components: list = field(default_factory=list)

    @property
    def selected_names(self) -> list:
        return [self.feature_names[i] for i in self.selected] if self.feature_names else list(self.selected)

    def to_dict(self) -> dict:
        doc = {
            "method": self.method,
            "selected": self.selected_names,
            "selected_indices": [int(i) for i in self.selected],
            "avg": [float(x) for x in self.avg],
            "avg_n": [float(x) for x in self.avg_n],
            "component_restricted": bool(self.component_restricted),
        }
        if self.objective is not None:
            doc["objective"] = self.objective
        if self.other_components:
            doc["other_components"] = [
                [self.feature_names[i] if self.feature_names else int(i) for i in comp]
                for comp in self.other_components
            ]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["avg", "avg_n"])
        for a, b in zip(self.avg, self.avg_n):
            w.writerow([repr(float(a)), repr(float(b))])
        return buf.getvalue()


def _undirected(g) -> UndirectedFeatureGraph:
    return to_undirected(g) if isinstance(g, DirectedFeatureGraph) else g


def out_degree_centrality(g: DirectedFeatureGraph, include_leaf_edges: bool = True) -> np.ndarray:
    """Sum of outgoing edge weights per feature vertex."""
    d = g.n_features
    cols = d + 1 if include_leaf_edges else d
    return g.adjacency[:d, :cols].sum(axis=1)


def connected_components(g) -> list:
    """Vertex index lists of positive-weight components, largest first."""
    W = _undirected(g).weights
    d = W.shape[0]
    seen = np.zeros(d, dtype=bool)
    comps = []
    for s in range(d):
        if seen[s]:
            continue
        seen[s] = True
        stack, comp = [s], []
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in np.nonzero(W[v] > 0)[0]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(int(u))
        comps.append(sorted(comp))
    comps.sort(key=lambda c: (-len(c), c[0]))
    return comps


def _is_connected(W: np.ndarray, vs) -> bool:
    vs = list(vs)
    inside = set(vs)
    seen = {vs[0]}
    stack = [vs[0]]
    while stack:
        v = stack.pop()
        for u in vs:
            if u not in seen and W[v, u] > 0:
                seen.add(u)
                stack.append(u)
    return len(seen) == len(inside)


def subgraph_weight(g, vertex_set):
    """(TW, AW, connected) of the subgraph induced by ``vertex_set``.

    AW divides TW by the number of possible edges, so missing edges count
    as zero.
    """
    W = _undirected(g).weights
    vs = sorted({int(v) for v in vertex_set})
    if len(vs) < 2:
        raise ValueError("subgraph_weight needs at least 2 vertices")
    if vs[0] < 0 or vs[-1] >= W.shape[0]:
        raise ValueError("vertex index out of range")
    sub = W[np.ix_(vs, vs)]
    tw = float(np.triu(sub, 1).sum())
    k = len(vs)
    return tw, 2.0 * tw / (k * (k - 1)), _is_connected(W, vs)


def enumerate_connected_subsets(W: np.ndarray, vertices, k: int):
    """Yield every connected induced k-subset of ``vertices`` exactly once.

    Extension-based enumeration: a subset rooted at its smallest vertex ``v``
    only grows through vertices larger than ``v`` that are exclusive
    neighbours of the newest member, which makes each subset appear once.
    """
    vertices = sorted(int(v) for v in vertices)
    allowed = set(vertices)
    nbrs = {v: [int(u) for u in np.nonzero(W[v] > 0)[0] if int(u) in allowed and u != v] for v in vertices}

    def extend(sub, closed, ext, root):
        if len(sub) == k:
            yield tuple(sorted(sub))
            return
        ext = list(ext)
        while ext:
            w = ext.pop(0)
            new_ext = ext + [u for u in nbrs[w] if u > root and u not in closed]
            yield from extend(sub + [w], closed | set(nbrs[w]) | {w}, new_ext, root)

    for v in vertices:
        if k == 1:
            yield (v,)
            continue
        start = [u for u in nbrs[v] if u > v]
        yield from extend([v], set(nbrs[v]) | {v}, start, v)


def _largest_component(U: UndirectedFeatureGraph, k: int, strict: bool):
    comps = connected_components(U)
    comp = comps[0]
    if len(comp) < 2:
        raise ValueError("graph has no edges; nothing to select")
    restricted = len(comps) > 1
    if k > len(comp):
        if strict:
            raise ValueError(f"k={k} exceeds the largest connected component ({len(comp)} vertices)")
        k = len(comp)
        restricted = True
    return comp, comps[1:], k, restricted


def _order_within(W: np.ndarray, vs) -> tuple:
    """Greedy order of a fixed vertex set and its avg/avg_n traces."""
    vs = sorted(vs)
    sub = W[np.ix_(vs, vs)]
    iu = np.triu_indices(len(vs), 1)
    best = int(np.argmax(sub[iu]))
    a, b = iu[0][best], iu[1][best]
    order = [vs[a], vs[b]]
    w0 = float(W[order[0], order[1]])
    avg, avg_n, tw = [w0], [w0], w0
    rest = [v for v in vs if v not in order]
    while rest:
        scores = [W[v, order].sum() for v in rest]
        i = int(np.argmax(scores))
        v = rest.pop(i)
        tw += scores[i]
        avg_n.append(float(scores[i] / len(order)))
        order.append(v)
        m = len(order)
        avg.append(2.0 * tw / (m * (m - 1)))
    return order, avg, avg_n


def brute_force_select(g, k: int, objective: str = "max_AW", budget: int = DEFAULT_BUDGET,
                       strict: bool = True) -> SelectionResult:
    """Heaviest connected k-subset of the largest component.

    Ties go to the lexicographically smallest sorted index tuple. The
    selected set is reported in greedy order so that its traces read like
    :func:`greedy_select`'s.
    """
    if objective not in ("max_AW", "max_TW"):
        raise ValueError("objective must be 'max_AW' or 'max_TW'")
    if k < 2:
        raise ValueError("k must be >= 2")
    U = _undirected(g)
    W = U.weights
    comp, others, k, restricted = _largest_component(U, k, strict)
    best_key, best_set, count = None, None, 0
    for sub in enumerate_connected_subsets(W, comp, k):
        count += 1
        if count > budget:
            raise BudgetExceeded(
                f"more than {budget} connected subsets of size {k} "
                f"(upper bound C({len(comp)},{k}) = {math.comb(len(comp), k)})"
            )
        tw = float(np.triu(W[np.ix_(sub, sub)], 1).sum())
        if best_key is None or tw > best_key or (tw == best_key and sub < best_set):
            best_key, best_set = tw, sub
    order, avg, avg_n = _order_within(W, best_set)
    return SelectionResult(order, avg, avg_n, "brute_force", restricted, U.feature_names,
                           objective, others)


def brute_force_profile(g, ks, budget: int = DEFAULT_BUDGET) -> dict:
    """Best achievable AW for each k (the brute-force avg trace)."""
    out = {}
    for k in ks:
        res = brute_force_select(g, k, budget=budget)
        out[k] = res.avg[-1]
    return out


def greedy_select(g, k: int, strict: bool = False) -> SelectionResult:
    """Grow from the heaviest edge by adding the neighbour with the largest AWN.

    Only vertices adjacent to the current set are candidates, so the result
    stays connected. Ties go to the lowest vertex index.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    U = _undirected(g)
    W = U.weights
    comp, others, k, restricted = _largest_component(U, k, strict)
    sub = W[np.ix_(comp, comp)]
    iu = np.triu_indices(len(comp), 1)
    e = int(np.argmax(sub[iu]))
    selected = [comp[iu[0][e]], comp[iu[1][e]]]
    w0 = float(W[selected[0], selected[1]])
    avg, avg_n, tw = [w0], [w0], w0
    in_set = np.zeros(W.shape[0], dtype=bool)
    in_set[selected] = True
    comp_arr = np.array(comp)
    while len(selected) < k:
        cand = comp_arr[~in_set[comp_arr]]
        links = W[np.ix_(cand, selected)]
        adjacent = (links > 0).any(axis=1)
        sums = np.where(adjacent, links.sum(axis=1), -np.inf)
        i = int(np.argmax(sums))
        v = int(cand[i])
        avg_n.append(float(sums[i] / len(selected)))
        tw += float(sums[i])
        selected.append(v)
        in_set[v] = True
        m = len(selected)
        avg.append(2.0 * tw / (m * (m - 1)))
    return SelectionResult(selected, avg, avg_n, "greedy", restricted, U.feature_names,
                           None, others)


def knee_report(result) -> list:
    """(position, drop) pairs for successive avg differences, steepest drop first.

    ``position`` is the number of features selected before the drop.
    """
    avg = list(getattr(result, "avg", result))
    if len(avg) < 2:
        raise ValueError("need at least 3 selected features")
    drops = [(i + 2, avg[i + 1] - avg[i]) for i in range(len(avg) - 1)]
    return sorted(drops, key=lambda t: (t[1], t[0]))
