"""End-to-end pipelines: clustering + graph mining, benchmark comparison, synthetic studies."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import __version__
from .clustering import (
    adjusted_rand_index,
    affinity_to_distance,
    pearson_correlation,
    ward_cluster,
    welch_t_test,
)
from .dataset import BENCHMARK_MANIFEST, Dataset, load_csv, synthetic_suite
from .feature_graph import (
    CRITERIA,
    average_graphs,
    build_graph,
    cluster_specific_graphs,
    export_graph,
    to_undirected,
)
from .forest import (
    ForestParams,
    compute_affinity,
    gini_importance,
    train_supervised_forest,
    train_unsupervised_forest,
)
from .graph_mining import (
    brute_force_select,
    connected_components,
    greedy_select,
    knee_report,
    out_degree_centrality,
    subgraph_weight,
)

log = logging.getLogger(__name__)

__all__ = [
    "PipelineConfig",
    "AuditLog",
    "PipelineError",
    "run_pipeline",
    "run_benchmark_comparison",
    "run_synthetic_experiments",
    "cluster_dataset",
    "match_clusters",
    "write_json",
    "local_knees",
]


class PipelineError(RuntimeError):
    """A module error re-raised with the name of the pipeline stage."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage


@dataclass
class PipelineConfig:
    input_csv: Optional[str] = None
    suite: Optional[str] = None
    q: int = 3
    has_header: bool = True
    label_column: Optional[str] = None
    n_trees: int = 100
    min_leaf_size: int = 5
    mtry: Optional[int] = None
    bootstrap: bool = True
    seed: int = 0
    criterion: str = "sample"
    n_clusters: Optional[int] = None
    method: str = "greedy"
    k: Optional[int] = None
    objective: str = "max_AW"
    replicates: int = 10
    selection_trees: Optional[int] = None
    budget: int = 10**7
    out_dir: str = "out"

    def validate(self):
        if (self.input_csv is None) == (self.suite is None):
            raise ValueError("exactly one of input_csv or suite must be given")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.method not in ("greedy", "brute_force"):
            raise ValueError("method must be 'greedy' or 'brute_force'")

    def forest_params(self, seed: Optional[int] = None, n_trees: Optional[int] = None) -> ForestParams:
        return ForestParams(
            n_trees=self.n_trees if n_trees is None else n_trees,
            min_leaf_size=self.min_leaf_size,
            mtry=self.mtry,
            bootstrap=self.bootstrap,
            seed=self.seed if seed is None else seed,
        )

    def replicate_seeds(self) -> list:
        return [self.seed + r for r in range(self.replicates)]


def _hash(obj) -> str:
    h = hashlib.sha256()
    if isinstance(obj, np.ndarray):
        h.update(str(obj.dtype).encode() + str(obj.shape).encode())
        h.update(np.ascontiguousarray(obj).tobytes())
    else:
        h.update(json.dumps(_plain(obj), sort_keys=True).encode())
    return h.hexdigest()[:16]


class AuditLog:
    """Ordered record of pipeline stages with short input/output digests."""

    def __init__(self):
        self.entries: list = []

    def record(self, stage: str, inputs=None, outputs=None, **extra):
        entry = {"stage": stage, "index": len(self.entries)}
        if inputs is not None:
            entry["input_hash"] = _hash(inputs)
        if outputs is not None:
            entry["output_hash"] = _hash(outputs)
        entry.update(extra)
        self.entries.append(entry)
        log.debug("stage %s %s", stage, entry.get("output_hash", ""))

    def stages(self) -> list:
        return [e["stage"] for e in self.entries]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.entries)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_plain(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cluster_dataset(ds: Dataset, params: ForestParams, p: int):
    """Unsupervised forest -> affinity -> Ward; returns (forest, affinity, assignment, dendrogram)."""
    forest = train_unsupervised_forest(ds, params)
    aff = compute_affinity(forest, ds)
    assignment, dendro = ward_cluster(affinity_to_distance(aff), p)
    return forest, aff, assignment, dendro


def match_clusters(pred, truth) -> dict:
    """Map each predicted cluster id to a ground-truth label (Hungarian on overlaps)."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    pu, pi = np.unique(pred, return_inverse=True)
    tu, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pu.size, tu.size))
    np.add.at(table, (pi, ti), 1)
    rows, cols = linear_sum_assignment(-table)
    mapping = {int(pu[r]): int(tu[c]) for r, c in zip(rows, cols)}
    for r in range(pu.size):
        mapping.setdefault(int(pu[r]), int(tu[np.argmax(table[r])]))
    return mapping


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineError:
                raise
            except Exception as exc:  # surfaced with the stage tag
                raise PipelineError(name, exc) from exc
        return inner
    return wrap


def _load_input(cfg: PipelineConfig, seed: Optional[int] = None) -> Dataset:
    if cfg.input_csv is not None:
        return load_csv(cfg.input_csv, cfg.has_header, cfg.label_column)
    return synthetic_suite(cfg.suite, cfg.seed if seed is None else seed, cfg.q)


def _cluster_count(cfg: PipelineConfig, ds: Dataset) -> int:
    if cfg.n_clusters is not None:
        return cfg.n_clusters
    meta = ds.metadata
    if "cluster_centers" in meta:
        return len(meta["cluster_centers"])
    if meta.get("benchmark") in BENCHMARK_MANIFEST:
        return BENCHMARK_MANIFEST[meta["benchmark"]]["clusters"]
    raise ValueError("number of clusters is required (--clusters)")


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Cluster, build overall and per-cluster graphs, rank and select; write reports.

    Returns a dict of the written file paths and in-memory results.
    """
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    audit = AuditLog()
    ds = _stage("load")(_load_input)(cfg)
    audit.record("load", outputs=ds.values)
    p = _stage("load")(_cluster_count)(cfg, ds)
    X = ds.without_labels()

    params = cfg.forest_params()
    forest = _stage("forest")(train_unsupervised_forest)(X, params)
    audit.record("forest", inputs=X.values, outputs=[t.inbag_counts for t in forest.trees])
    aff = _stage("affinity")(compute_affinity)(forest, X)
    audit.record("affinity", outputs=aff.values)
    dist = affinity_to_distance(aff)
    assignment, dendro = _stage("cluster")(ward_cluster)(dist, p)
    audit.record("cluster", inputs=dist, outputs=assignment.labels)

    overall = _stage("graph")(build_graph)(forest, cfg.criterion)
    per_cluster = _stage("graph")(cluster_specific_graphs)(forest, cfg.criterion, assignment, X)
    audit.record("graph", outputs=overall.adjacency)

    cent = out_degree_centrality(overall)
    k = cfg.k if cfg.k is not None else min(X.n_features, 2 + X.n_features // 2)
    if cfg.method == "greedy":
        sel = _stage("select")(greedy_select)(overall, k)
    else:
        sel = _stage("select")(brute_force_select)(overall, k, cfg.objective, cfg.budget, strict=False)
    cluster_sel = {}
    for c, g in per_cluster.items():
        try:
            cluster_sel[c] = greedy_select(g, k)
        except ValueError as exc:
            log.warning("cluster %d: no selection (%s)", c, exc)
    audit.record("select", outputs=sel.selected)

    out = cfg.out_dir
    paths = {}
    paths["assignments"] = os.path.join(out, "assignments.csv")
    _write_text(paths["assignments"], _assignments_csv(X.sample_ids, assignment.labels))
    paths["affinity"] = os.path.join(out, "affinity.csv")
    _write_text(paths["affinity"], _matrix_csv(aff.values, X.sample_ids))
    paths["dendrogram"] = os.path.join(out, "dendrogram.json")
    write_json(paths["dendrogram"], dendro.to_dict())
    paths["graphs"] = []
    for tag, g in [("overall", overall)] + [(f"cluster{c}", g) for c, g in per_cluster.items()]:
        for fmt, ext in (("json", "json"), ("adjacency_csv", "csv"), ("dot", "dot"), ("graphml", "graphml")):
            path = os.path.join(out, f"graph_{tag}.{ext}")
            _write_text(path, export_graph(g, fmt))
            paths["graphs"].append(path)
    paths["centrality"] = os.path.join(out, "centrality.csv")
    cent_cols = {"overall": cent}
    cent_cols.update({f"cluster{c}": out_degree_centrality(g) for c, g in per_cluster.items()})
    _write_text(paths["centrality"], _centrality_csv(X.feature_names, cent_cols))
    paths["selection"] = os.path.join(out, "selection.json")
    _write_text(paths["selection"], sel.to_json())
    paths["selection_trace"] = os.path.join(out, "selection_trace.csv")
    _write_text(paths["selection_trace"], sel.trace_csv())
    write_json(os.path.join(out, "cluster_selections.json"),
               {str(c): s.to_dict() for c, s in cluster_sel.items()})
    audit_path = os.path.join(out, "audit.jsonl")
    _write_text(audit_path, audit.to_jsonl())
    paths["audit"] = audit_path
    return {
        "paths": paths,
        "forest": forest,
        "assignment": assignment,
        "overall_graph": overall,
        "cluster_graphs": per_cluster,
        "centrality": cent,
        "selection": sel,
        "audit": audit,
    }


def _assignments_csv(ids, labels) -> str:
    lines = ["sample_id,cluster"] + [f"{s},{int(c)}" for s, c in zip(ids, labels)]
    return "\n".join(lines) + "\n"


def _matrix_csv(M, names) -> str:
    lines = ["," + ",".join(names)]
    for name, row in zip(names, M):
        lines.append(name + "," + ",".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def _centrality_csv(names, cols: dict) -> str:
    keys = list(cols)
    lines = ["feature," + ",".join(keys)]
    for j, name in enumerate(names):
        lines.append(name + "," + ",".join(repr(float(cols[k][j])) for k in keys))
    return "\n".join(lines) + "\n"


def _graph_subset(avg_graph, centrality, k: int):
    """Greedy top-k, topped up by centrality when the component is too small."""
    res = greedy_select(avg_graph, k)
    chosen = list(res.selected)
    if len(chosen) < k:
        for j in np.argsort(-centrality, kind="stable"):
            if len(chosen) == k:
                break
            if int(j) not in chosen:
                chosen.append(int(j))
    return sorted(chosen), res.component_restricted


def run_benchmark_comparison(ds: Dataset, cfg: PipelineConfig, audit: Optional[AuditLog] = None) -> dict:
    """Graph-based (greedy) versus impurity-based (Gini) feature selection.

    Labels of ``ds`` are touched only in the final scoring stage; the number
    of clusters comes from ``cfg.n_clusters`` or the benchmark manifest.
    """
    if ds.labels is None:
        raise PipelineError("load", ValueError("benchmark comparison needs ground-truth labels"))
    audit = audit if audit is not None else AuditLog()
    truth = ds.labels
    X = ds.without_labels()
    p = _stage("load")(_cluster_count)(cfg, ds)
    d = X.n_features
    seeds = cfg.replicate_seeds()
    sel_trees = cfg.selection_trees or cfg.n_trees

    base_preds, graphs, ginis = [], [], []
    for s in seeds:
        forest, _, assignment, _ = _stage("forest")(cluster_dataset)(X, cfg.forest_params(seed=s), p)
        base_preds.append(assignment.labels)
        graphs.append(build_graph(forest, cfg.criterion))
        sup = _stage("supervised")(train_supervised_forest)(X, assignment.labels, cfg.forest_params(seed=s))
        ginis.append(gini_importance(sup))
    audit.record("unsupervised_replicates", inputs=X.values, outputs=np.array(base_preds))
    avg_graph = average_graphs(graphs)
    centrality = out_degree_centrality(avg_graph)
    gini = np.mean(ginis, axis=0)
    audit.record("importance", outputs=np.vstack([centrality, gini]))
    try:
        r, pval = pearson_correlation(centrality, gini)
    except ValueError as exc:
        log.warning("pearson undefined: %s", exc)
        r, pval = float("nan"), float("nan")

    gini_order = [int(j) for j in np.argsort(-gini, kind="stable")]
    cache: dict = {}
    subsets = {"graph": {}, "impurity": {}}
    restricted = {}

    def predict(subset):
        key = tuple(subset)
        if key not in cache:
            sub = X.select_features(subset)
            cache[key] = [
                cluster_dataset(sub, cfg.forest_params(seed=s, n_trees=sel_trees), p)[2].labels
                for s in seeds
            ]
        return cache[key]

    preds = {"graph": {}, "impurity": {}}
    for k in range(2, d + 1):
        gsub, restricted[k] = _graph_subset(avg_graph, centrality, k)
        isub = sorted(gini_order[:k])
        subsets["graph"][k], subsets["impurity"][k] = gsub, isub
        preds["graph"][k] = _stage("retrain")(predict)(gsub)
        preds["impurity"][k] = _stage("retrain")(predict)(isub)
    audit.record("retrain", outputs=[np.array(v) for arm in preds.values() for v in arm.values()])

    # scoring: the only stage that reads ground truth
    audit.record("score", inputs=truth, ground_truth_access=True)
    baseline = [adjusted_rand_index(truth, pr) for pr in base_preds]
    ari = {
        arm: {k: [adjusted_rand_index(truth, pr) for pr in preds[arm][k]] for k in preds[arm]}
        for arm in preds
    }
    ks = list(range(2, d + 1))
    report = {
        "dataset": ds.metadata.get("benchmark", cfg.input_csv),
        "n_samples": X.n_samples,
        "n_features": d,
        "n_clusters": p,
        "feature_names": list(X.feature_names),
        "k": ks,
        "criterion": cfg.criterion,
        "importance": {"graph_centrality": centrality, "gini": gini},
        "pearson": {"r": r, "p_value": pval},
        "baseline_ari": {"values": baseline, "mean": float(np.mean(baseline)), "sd": float(np.std(baseline, ddof=1)) if len(baseline) > 1 else 0.0},
        "ari": {
            arm: {
                "mean": [float(np.mean(ari[arm][k])) for k in ks],
                "sd": [float(np.std(ari[arm][k], ddof=1)) if len(seeds) > 1 else 0.0 for k in ks],
                "values": [ari[arm][k] for k in ks],
            }
            for arm in ari
        },
        "subsets": {arm: [[X.feature_names[j] for j in subsets[arm][k]] for k in ks] for arm in subsets},
        "graph_component_restricted": [bool(restricted[k]) for k in ks],
        "metadata": {
            "version": __version__,
            "replicates": cfg.replicates,
            "n_trees": cfg.n_trees,
            "selection_trees": sel_trees,
            "seeds": seeds,
            "importance_baseline": "plain Gini decrease (no impurity correction)",
            "seed_schedule": "both arms reuse the replicate seeds",
        },
    }
    return report


def benchmark_csv(report: dict) -> str:
    lines = ["k,graph_mean,graph_sd,impurity_mean,impurity_sd"]
    for i, k in enumerate(report["k"]):
        g, im = report["ari"]["graph"], report["ari"]["impurity"]
        lines.append(f"{k},{g['mean'][i]!r},{g['sd'][i]!r},{im['mean'][i]!r},{im['sd'][i]!r}")
    return "\n".join(lines) + "\n"


def _smd(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    s = np.sqrt((a.var(ddof=1) + b.var(ddof=1)) / 2.0)
    return float((a.mean() - b.mean()) / s) if s > 0 else float("inf")


def _safe_welch(a, b):
    try:
        return welch_t_test(a, b)
    except ValueError:
        return float("nan"), float("nan")


def _ev1(cfg, criteria):
    per = {c: {"relevant": [], "irrelevant": [], "smd": []} for c in criteria}
    for s in cfg.replicate_seeds():
        ds = synthetic_suite("ev1_centrality", s)
        forest = train_unsupervised_forest(ds, cfg.forest_params(seed=s))
        rel = np.array([r == "relevant" for r in ds.metadata["relevance"]])
        for c in criteria:
            cent = out_degree_centrality(build_graph(forest, c))
            per[c]["relevant"].extend(cent[rel].tolist())
            per[c]["irrelevant"].extend(cent[~rel].tolist())
            per[c]["smd"].append(_smd(cent[rel], cent[~rel]))
    out = {}
    for c in criteria:
        t, pv = _safe_welch(per[c]["relevant"], per[c]["irrelevant"])
        out[c] = {
            "mean_relevant": float(np.mean(per[c]["relevant"])),
            "mean_irrelevant": float(np.mean(per[c]["irrelevant"])),
            "welch_t": t,
            "welch_p": pv,
            "smd_per_replicate": per[c]["smd"],
            "smd_mean": float(np.mean(per[c]["smd"])),
            "centrality_relevant": per[c]["relevant"],
            "centrality_irrelevant": per[c]["irrelevant"],
        }
    return out


def _ev1_pairs(cfg, criteria):
    xs = {c: [] for c in criteria}
    ys = {c: [] for c in criteria}
    designated = {c: [] for c in criteria}
    for s in cfg.replicate_seeds():
        ds = synthetic_suite("ev1_pairs", s)
        forest = train_unsupervised_forest(ds, cfg.forest_params(seed=s))
        levels = np.array(ds.metadata["pair_separated_clusters"])
        iu = np.triu_indices(ds.n_features, 1)
        for c in criteria:
            W = to_undirected(build_graph(forest, c)).weights
            xs[c].extend(levels[iu].tolist())
            ys[c].extend(W[iu].tolist())
            designated[c].append([float(W[i, j]) for i, j in ds.metadata["designated_pairs"]])
    out = {}
    for c in criteria:
        try:
            r, pv = pearson_correlation(xs[c], ys[c])
        except ValueError:
            r, pv = float("nan"), float("nan")
        out[c] = {
            "pearson_r": r,
            "p_value": pv,
            "n_pairs": len(xs[c]),
            "designated_pair_weights": designated[c],
            "mean_weight_by_level": {
                int(lv): float(np.mean([y for x, y in zip(xs[c], ys[c]) if x == lv]))
                for lv in sorted(set(xs[c]))
            },
        }
    return out


def _ev2(cfg, criteria):
    groups = ("cluster_specific", "sub_relevant", "irrelevant")
    pooled = {c: {g: [] for g in groups} for c in criteria}
    rep_means = {c: [] for c in criteria}
    aris = []
    for s in cfg.replicate_seeds():
        ds = synthetic_suite("ev2_cluster", s)
        X = ds.without_labels()
        forest, _, assignment, _ = cluster_dataset(X, cfg.forest_params(seed=s), 4)
        aris.append(adjusted_rand_index(ds.labels, assignment.labels))
        mapping = match_clusters(assignment.labels, ds.labels)
        specific = ds.metadata["cluster_specific"]
        rel = [j for j, r in enumerate(ds.metadata["relevance"]) if r == "relevant"]
        for c in criteria:
            graphs = cluster_specific_graphs(forest, c, assignment, X)
            vals = {g: [] for g in groups}
            for cid, g in graphs.items():
                cent = out_degree_centrality(g)
                own = specific[mapping[cid]]
                vals["cluster_specific"].append(cent[own])
                vals["sub_relevant"].extend(cent[[j for j in rel if j != own]].tolist())
                vals["irrelevant"].extend(np.delete(cent, rel).tolist())
            for g in groups:
                pooled[c][g].extend(float(v) for v in vals[g])
            rep_means[c].append([float(np.mean(vals[g])) for g in groups])
    out = {"ari": aris}
    for c in criteria:
        means = np.array(rep_means[c])
        ordered = int(np.sum((means[:, 0] > means[:, 1]) & (means[:, 1] > means[:, 2])))
        t1, p1 = _safe_welch(pooled[c]["cluster_specific"], pooled[c]["sub_relevant"])
        t2, p2 = _safe_welch(pooled[c]["sub_relevant"], pooled[c]["irrelevant"])
        out[c] = {
            "group_means_per_replicate": means.tolist(),
            "replicates_ordered": ordered,
            "welch_specific_vs_sub": {"t": t1, "p": p1},
            "welch_sub_vs_irrelevant": {"t": t2, "p": p2},
        }
    return out


def _median_trace(traces) -> list:
    return np.median(np.array(traces), axis=0).tolist()


def local_knees(avg) -> list:
    """Positions whose drop is steeper than the drops on both sides.

    Position ``i + 2`` is the drop from ``avg[i]`` to ``avg[i + 1]``; the
    first and last drops have one neighbour and are never reported.
    """
    drops = -np.diff(np.asarray(avg, dtype=float))
    return [i + 2 for i in range(1, len(drops) - 1) if drops[i] > drops[i - 1] and drops[i] > drops[i + 1]]


def _ev3(cfg, criteria, qs, k_max=12):
    out = {}
    for q in qs:
        out[q] = {}
        res = {c: {"greedy_first_q": [], "brute_at_q": [], "fraction_greedy": [], "fraction_brute": [],
                   "greedy_avg": [], "brute_avg": [], "largest_drop": []} for c in criteria}
        for s in cfg.replicate_seeds():
            ds = synthetic_suite("ev3_relevant", s, q)
            forest = train_unsupervised_forest(ds, cfg.forest_params(seed=s))
            relevant = set(range(q))
            for c in criteria:
                U = to_undirected(build_graph(forest, c))
                g = greedy_select(U, k_max)
                r = res[c]
                r["greedy_first_q"].append(set(g.selected[:q]) == relevant)
                r["fraction_greedy"].append([len(relevant & set(g.selected[:k])) / k for k in range(2, k_max + 1)])
                r["greedy_avg"].append(g.avg)
                r["largest_drop"].append(knee_report(g)[0][0])
                bsets, bavg = [], []
                for k in range(2, k_max + 1):
                    b = brute_force_select(U, k, budget=cfg.budget, strict=False)
                    bsets.append(set(b.selected))
                    bavg.append(b.avg[-1])
                r["brute_at_q"].append(bsets[q - 2] == relevant)
                r["fraction_brute"].append([len(relevant & bs) / len(bs) for bs in bsets])
                r["brute_avg"].append(bavg)
        for c in criteria:
            r = res[c]
            med_g = _median_trace(r["greedy_avg"])
            med_b = _median_trace(r["brute_avg"])
            out[q][c] = {
                "greedy_all_relevant_first": float(np.mean(r["greedy_first_q"])),
                "brute_relevant_at_q": float(np.mean(r["brute_at_q"])),
                "relevant_fraction_greedy": np.mean(r["fraction_greedy"], axis=0).tolist(),
                "relevant_fraction_brute": np.mean(r["fraction_brute"], axis=0).tolist(),
                "k": list(range(2, k_max + 1)),
                "largest_drop_per_replicate": r["largest_drop"],
                "median_greedy_avg": med_g,
                "median_brute_avg": med_b,
                "median_trace_largest_drop": knee_report(med_g)[0][0],
                "median_brute_trace_largest_drop": knee_report(med_b)[0][0],
            }
    return out


def _ev4(cfg, criterion="sample"):
    import itertools

    triads = list(itertools.combinations(range(10), 3))
    valid = {t for t in triads if all(len(set(t) & set(pair)) == 1 for pair in ((0, 1), (2, 3), (4, 5)))}
    top_valid, top8_valid, identical, greedy_avgs, brute_avgs, rankings = [], [], [], [], [], []
    for s in cfg.replicate_seeds():
        ds = synthetic_suite("ev4_redundant", s)
        forest = train_unsupervised_forest(ds, cfg.forest_params(seed=s))
        U = to_undirected(build_graph(forest, criterion))
        aw = [(subgraph_weight(U, t)[1], t) for t in triads]
        ranked = sorted(aw, key=lambda x: (-x[0], x[1]))
        rankings.append([[list(t), w] for w, t in ranked])
        top_valid.append(ranked[0][1] in valid)
        top8_valid.append(sum(t in valid for _, t in ranked[:8]))
        g = greedy_select(U, 10)
        greedy_avgs.append(g.avg)
        bavg, same = [], True
        for k in range(2, 11):
            b = brute_force_select(U, k, budget=cfg.budget, strict=False)
            bavg.append(b.avg[-1])
            same &= set(b.selected) == set(g.selected[:k])
        identical.append(bool(same))
        brute_avgs.append(bavg)
    med_g = _median_trace(greedy_avgs)
    med_b = _median_trace(brute_avgs)
    return {
        "criterion": criterion,
        "n_triads": len(triads),
        "n_valid_triads": len(valid),
        "top_triad_valid": top_valid,
        "top_triad_valid_rate": float(np.mean(top_valid)),
        "valid_in_top8": top8_valid,
        "greedy_equals_brute": identical,
        "triad_rankings": rankings,
        "median_greedy_avg": med_g,
        "median_brute_avg": med_b,
        "median_greedy_drops": [list(x) for x in knee_report(med_g)[:2]],
        "median_brute_drops": [list(x) for x in knee_report(med_b)[:2]],
        "median_greedy_knees": local_knees(med_g),
        "median_brute_knees": local_knees(med_b),
    }


def run_synthetic_experiments(name: str, cfg: PipelineConfig, criteria=CRITERIA, qs=(3, 4, 5, 6, 7)) -> dict:
    """Run one synthetic study over ``cfg.replicates`` replicates (seed + r)."""
    criteria = tuple(criteria)
    if name == "ev1":
        body = _ev1(cfg, criteria)
    elif name == "ev1_pairs":
        body = _ev1_pairs(cfg, criteria)
    elif name == "ev2":
        body = _ev2(cfg, criteria)
    elif name == "ev3":
        body = _ev3(cfg, criteria, qs)
    elif name == "ev4":
        body = _ev4(cfg)
    else:
        raise ValueError(f"unknown synthetic experiment {name!r}")
    return {
        "experiment": name,
        "replicates": cfg.replicates,
        "n_trees": cfg.n_trees,
        "seed": cfg.seed,
        "version": __version__,
        "results": body,
    }
