"""Command-line interface: ``forestgraph <command> ...``.

Every command writes into ``--out-dir``. Failures exit with status 1 and a
``error [stage]: message`` line on stderr.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys

import click
import numpy as np

from . import __version__
from .clustering import affinity_to_distance, ward_cluster
from .dataset import load_benchmark, load_csv, save_csv, synthetic_suite
from .experiments import (
    PipelineConfig,
    PipelineError,
    benchmark_csv,
    run_benchmark_comparison,
    run_pipeline,
    run_synthetic_experiments,
    write_json,
)
from .feature_graph import CRITERIA, EXPORT_FORMATS, build_graph, cluster_specific_graphs, export_graph, import_graph
from .forest import compute_affinity, forest_from_dict, forest_to_dict, train_unsupervised_forest
from .graph_mining import brute_force_select, greedy_select, out_degree_centrality

SUITES = ("ev1_centrality", "ev1_pairs", "ev2_cluster", "ev3_relevant", "ev4_redundant")
EXPERIMENTS = ("ev1", "ev1_pairs", "ev2", "ev3", "ev4")
_EXT = {"json": "json", "adjacency_csv": "csv", "dot": "dot", "graphml": "graphml"}


def _tagged(stage):
    """Run the command body and turn any failure into a stage-tagged exit."""

    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except click.exceptions.Exit:
                raise
            except click.ClickException:
                raise
            except PipelineError as exc:
                click.echo(f"error [{exc.stage}]: {exc.__cause__ or exc}", err=True)
                sys.exit(1)
            except Exception as exc:
                click.echo(f"error [{stage}]: {exc}", err=True)
                sys.exit(1)

        return inner

    return wrap


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _config(ctx, **overrides) -> PipelineConfig:
    g = ctx.obj
    base = dict(
        seed=g["seed"], n_trees=g["trees"], replicates=g["replicates"],
        min_leaf_size=g["min_leaf"], mtry=g["mtry"], out_dir=g["out_dir"],
    )
    base.update(overrides)
    return PipelineConfig(**base)


def _outdir(ctx) -> str:
    out = ctx.obj["out_dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _load_any(path: str, label_column, no_header: bool):
    if path in ("iris", "wine") and not os.path.exists(path):
        return load_benchmark(path)
    return load_csv(path, has_header=not no_header, label_column=label_column)


@click.group()
@click.version_option(__version__)
@click.option("--seed", type=int, default=0, show_default=True, help="Base random seed.")
@click.option("--trees", type=click.IntRange(min=1), default=100, show_default=True, help="Trees per forest.")
@click.option("--replicates", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--min-leaf", type=click.IntRange(min=1), default=5, show_default=True, help="Minimum leaf size.")
@click.option("--mtry", type=click.IntRange(min=1), default=None, help="Candidate features per split [ceil(sqrt(d))].")
@click.option("--out-dir", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("-v", "--verbose", count=True)
@click.pass_context
def main(ctx, seed, trees, replicates, min_leaf, mtry, out_dir, verbose):
    """Unsupervised random forests, feature graphs and graph-based feature selection."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = dict(seed=seed, trees=trees, replicates=replicates, min_leaf=min_leaf, mtry=mtry, out_dir=out_dir)


@main.command()
@click.argument("suite", type=click.Choice(SUITES))
@click.option("--q", type=click.IntRange(3, 7), default=3, show_default=True, help="Relevant features (ev3_relevant).")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="CSV path [OUT_DIR/SUITE.csv].")
@click.pass_context
@_tagged("generate")
def generate(ctx, suite, q, output):
    """Write a synthetic suite to CSV (labels in column 'label') plus a JSON sidecar."""
    ds = synthetic_suite(suite, ctx.obj["seed"], q)
    path = output or os.path.join(_outdir(ctx), f"{suite}.csv")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_csv(ds, path, include_labels=True, sidecar=True)
    click.echo(path)


@main.command()
@click.argument("input_csv")
@click.option("--clusters", "-p", type=click.IntRange(min=1), required=True, help="Number of clusters.")
@click.option("--label-column", default=None, help="Column to drop from the features (never used for training).")
@click.option("--no-header", is_flag=True)
@click.pass_context
@_tagged("cluster")
def cluster(ctx, input_csv, clusters, label_column, no_header):
    """Train an unsupervised forest and cut its Ward dendrogram into P clusters.

    Writes assignments.csv, affinity.csv, dendrogram.json and forest.json.
    """
    ds = _load_any(input_csv, label_column, no_header).without_labels()
    cfg = _config(ctx)
    forest = train_unsupervised_forest(ds, cfg.forest_params())
    aff = compute_affinity(forest, ds)
    assignment, dendro = ward_cluster(affinity_to_distance(aff), clusters)
    out = _outdir(ctx)
    _write(os.path.join(out, "assignments.csv"),
           "sample_id,cluster\n" + "".join(f"{s},{int(c)}\n" for s, c in zip(ds.sample_ids, assignment.labels)))
    _write(os.path.join(out, "affinity.csv"),
           "," + ",".join(ds.sample_ids) + "\n"
           + "".join(s + "," + ",".join(repr(float(x)) for x in row) + "\n" for s, row in zip(ds.sample_ids, aff.values)))
    write_json(os.path.join(out, "dendrogram.json"), dendro.to_dict())
    write_json(os.path.join(out, "forest.json"), forest_to_dict(forest))
    click.echo(f"{ds.n_samples} samples in {clusters} clusters -> {out}")


def _read_assignments(path: str) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if rows[0] != ["sample_id", "cluster"]:
        raise ValueError(f"{path}: expected header 'sample_id,cluster'")
    return np.array([int(r[1]) for r in rows[1:]], dtype=int)


def _read_forest(path: str):
    with open(path, encoding="utf-8") as fh:
        return forest_from_dict(json.load(fh))


@main.command()
@click.argument("forest_json", type=click.Path(exists=True, dir_okay=False))
@click.option("--criterion", type=click.Choice(CRITERIA), default="sample", show_default=True)
@click.option("--assignments", type=click.Path(exists=True, dir_okay=False), default=None,
              help="assignments.csv from 'cluster'; adds one graph per cluster.")
@click.option("--input", "input_csv", default=None, help="Samples routed for cluster graphs (required with --assignments).")
@click.option("--label-column", default=None)
@click.option("--no-header", is_flag=True)
@click.option("--format", "formats", type=click.Choice(EXPORT_FORMATS), multiple=True,
              help="Export formats [all].")
@click.pass_context
@_tagged("graph")
def graph(ctx, forest_json, criterion, assignments, input_csv, label_column, no_header, formats):
    """Build the overall (and per-cluster) feature graph of a saved forest."""
    forest = _read_forest(forest_json)
    graphs = [("overall", build_graph(forest, criterion))]
    if assignments is not None:
        if input_csv is None:
            raise click.UsageError("--assignments needs --input with the clustered samples")
        ds = _load_any(input_csv, label_column, no_header).without_labels()
        labels = _read_assignments(assignments)
        per = cluster_specific_graphs(forest, criterion, labels, ds)
        graphs += [(f"cluster{c}", g) for c, g in per.items()]
    out = _outdir(ctx)
    for tag, g in graphs:
        for fmt in formats or EXPORT_FORMATS:
            _write(os.path.join(out, f"graph_{tag}.{_EXT[fmt]}"), export_graph(g, fmt))
    click.echo(f"{len(graphs)} graph(s) -> {out}")


def _read_graph(path: str):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    doc = json.loads(text)
    if doc.get("format") == "forestgraph.forest":
        return None, forest_from_dict(doc)
    return import_graph(text, "json"), None


@main.command()
@click.argument("graph_json", type=click.Path(exists=True, dir_okay=False))
@click.option("--exclude-leaf", is_flag=True, help="Ignore edges into the leaf vertex.")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="CSV path [OUT_DIR/centrality.csv].")
@click.pass_context
@_tagged("rank")
def rank(ctx, graph_json, exclude_leaf, output):
    """Out-degree centrality of every feature, highest first."""
    g, _ = _read_graph(graph_json)
    if g is None or not hasattr(g, "adjacency"):
        raise ValueError("rank needs a directed graph JSON written by 'graph'")
    cent = out_degree_centrality(g, include_leaf_edges=not exclude_leaf)
    order = np.argsort(-cent, kind="stable")
    lines = ["rank,feature,centrality"] + [f"{r + 1},{g.feature_names[j]},{float(cent[j])!r}" for r, j in enumerate(order)]
    path = output or os.path.join(_outdir(ctx), "centrality.csv")
    _write(path, "\n".join(lines) + "\n")
    click.echo(path)


@main.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["greedy", "brute"]), default="greedy", show_default=True)
@click.option("--k", "k", type=click.IntRange(min=2), required=True)
@click.option("--criterion", type=click.Choice(CRITERIA), default=None,
              help="Edge criterion; builds the graph when SOURCE is a forest JSON [sample].")
@click.option("--objective", type=click.Choice(["aw", "tw"]), default="aw", show_default=True)
@click.option("--budget", type=click.IntRange(min=1), default=10**7, show_default=True,
              help="Largest number of subsets brute force may visit.")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="JSON path [OUT_DIR/selection.json].")
@click.pass_context
@_tagged("select")
def select(ctx, source, method, k, criterion, objective, budget, output):
    """Select K features from a graph JSON (or a forest JSON plus --criterion)."""
    g, forest = _read_graph(source)
    if forest is not None:
        g = build_graph(forest, criterion or "sample")
    elif criterion is not None and getattr(g, "criterion", criterion) != criterion:
        raise ValueError(f"graph was built with criterion {g.criterion!r}, not {criterion!r}")
    if k > g.n_features:
        raise ValueError(f"k={k} exceeds the {g.n_features} features of the graph")
    if method == "greedy":
        res = greedy_select(g, k)
    else:
        res = brute_force_select(g, k, "max_AW" if objective == "aw" else "max_TW", budget, strict=False)
    path = output or os.path.join(_outdir(ctx), "selection.json")
    _write(path, res.to_json())
    _write(os.path.splitext(path)[0] + "_trace.csv", res.trace_csv())
    click.echo(" ".join(res.selected_names))


@main.command()
@click.argument("dataset")
@click.option("--label-column", default="label", show_default=True,
              help="Ground-truth column of a CSV, read only for scoring.")
@click.option("--no-header", is_flag=True)
@click.option("--clusters", "-p", type=click.IntRange(min=1), default=None,
              help="Clusters to predict [manifest value for known benchmarks].")
@click.option("--criterion", type=click.Choice(CRITERIA), default="sample", show_default=True)
@click.option("--selection-trees", type=click.IntRange(min=1), default=None,
              help="Trees per forest when retraining on a subset [--trees].")
@click.pass_context
@_tagged("benchmark")
def benchmark(ctx, dataset, label_column, no_header, clusters, criterion, selection_trees):
    """Graph-based versus impurity-based selection, scored by ARI for every k.

    DATASET is a CSV path or one of the bundled names 'iris', 'wine'.
    """
    ds = _load_any(dataset, label_column, no_header)
    src = dataset if os.path.exists(dataset) else None
    cfg = _config(ctx, input_csv=src, suite=None if src else dataset, n_clusters=clusters,
                  criterion=criterion, selection_trees=selection_trees)
    report = run_benchmark_comparison(ds, cfg)
    out = _outdir(ctx)
    name = os.path.splitext(os.path.basename(dataset))[0]
    write_json(os.path.join(out, f"benchmark_{name}.json"), report)
    _write(os.path.join(out, f"benchmark_{name}.csv"), benchmark_csv(report))
    click.echo(benchmark_csv(report), nl=False)


@main.command()
@click.argument("name", type=click.Choice(EXPERIMENTS))
@click.option("--criterion", "criteria", type=click.Choice(CRITERIA), multiple=True,
              help="Criteria to evaluate [all four].")
@click.option("--q", "qs", type=click.IntRange(3, 7), multiple=True, help="ev3 relevant-feature counts [3..7].")
@click.pass_context
@_tagged("experiment")
def experiment(ctx, name, criteria, qs):
    """Run a synthetic study over --replicates datasets and write its JSON report."""
    cfg = _config(ctx, suite=name)
    report = run_synthetic_experiments(name, cfg, criteria=criteria or CRITERIA, qs=qs or (3, 4, 5, 6, 7))
    path = os.path.join(_outdir(ctx), f"experiment_{name}.json")
    write_json(path, report)
    click.echo(path)


@main.command()
@click.option("--input", "input_csv", default=None, help="CSV input.")
@click.option("--suite", type=click.Choice(SUITES), default=None, help="Synthetic input instead of a CSV.")
@click.option("--q", type=click.IntRange(3, 7), default=3)
@click.option("--label-column", default=None)
@click.option("--no-header", is_flag=True)
@click.option("--clusters", "-p", type=click.IntRange(min=1), default=None)
@click.option("--criterion", type=click.Choice(CRITERIA), default="sample", show_default=True)
@click.option("--method", type=click.Choice(["greedy", "brute"]), default="greedy", show_default=True)
@click.option("--k", "k", type=click.IntRange(min=2), default=None)
@click.option("--objective", type=click.Choice(["aw", "tw"]), default="aw", show_default=True)
@click.pass_context
@_tagged("run")
def run(ctx, input_csv, suite, q, label_column, no_header, clusters, criterion, method, k, objective):
    """Whole pipeline: forest, clusters, graphs, centrality and selection."""
    cfg = _config(
        ctx, input_csv=input_csv, suite=suite, q=q, label_column=label_column, has_header=not no_header,
        n_clusters=clusters, criterion=criterion, method="greedy" if method == "greedy" else "brute_force",
        k=k, objective="max_AW" if objective == "aw" else "max_TW",
    )
    res = run_pipeline(cfg)
    click.echo(" ".join(res["selection"].selected_names))


if __name__ == "__main__":
    main()
