"""Dataset container, CSV ingestion, variance filtering and synthetic suites."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

__all__ = [
    "Dataset",
    "SyntheticSpec",
    "load_csv",
    "save_csv",
    "variance_filter",
    "generate_blobs",
    "synthetic_suite",
    "SUITE_NAMES",
    "BENCHMARK_MANIFEST",
    "load_benchmark",
]


@dataclass(frozen=True)
class Dataset:
    """Samples x features matrix with names and optional ground-truth labels.

    ``labels`` are for evaluation only and never reach the training code.
    ``metadata`` holds feature annotations for synthetic suites (relevance
    groups, pair discriminability, ...).
    """

    values: np.ndarray
    feature_names: tuple
    sample_ids: tuple
    labels: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("values must be a 2-d matrix")
        n, d = values.shape
        if n < 2 or d < 1:
            raise ValueError(f"need at least 2 samples and 1 feature, got {n}x{d}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != d:
            raise ValueError(f"{len(names)} feature names for {d} columns")
        if any(not s for s in names):
            raise ValueError("feature names must be non-empty")
        if len(set(names)) != d:
            dupes = sorted({s for s in names if names.count(s) > 1})
            raise ValueError(f"duplicate feature names: {dupes}")
        ids = tuple(str(s) for s in self.sample_ids)
        if len(ids) != n:
            raise ValueError(f"{len(ids)} sample ids for {n} rows")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (n,):
                raise ValueError(f"labels must have length {n}")
            labels = labels.copy()
            labels.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def select_features(self, indices: Sequence[int]) -> "Dataset":
        """Column subset in the given order; feature annotations are dropped."""
        idx = [int(i) for i in indices]
        return Dataset(
            values=self.values[:, idx],
            feature_names=[self.feature_names[i] for i in idx],
            sample_ids=self.sample_ids,
            labels=self.labels,
        )

    def without_labels(self) -> "Dataset":
        return Dataset(self.values, self.feature_names, self.sample_ids, None, dict(self.metadata))


def _default_names(d: int) -> list:
    return [f"V{j + 1}" for j in range(d)]


def load_csv(path, has_header: bool = True, label_column: Optional[str] = None) -> Dataset:
    """Read a comma-separated numeric table.

    Rows are numbered from 1 over data rows (the header is not counted) in
    error messages. Without a header, features are named V1..Vd and
    ``label_column`` may be given as a 1-based column position or name.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if has_header:
        if not rows:
            raise ValueError(f"{path}: empty file")
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    else:
        width = len(rows[0]) if rows else 0
        header = _default_names(width)
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise ValueError(f"{path}: duplicate feature names {dupes}")

    label_idx = None
    if label_column is not None:
        if label_column in header:
            label_idx = header.index(label_column)
        elif not has_header and str(label_column).isdigit():
            label_idx = int(label_column) - 1
        else:
            raise ValueError(f"{path}: label column {label_column!r} not found")

    values, labels = [], []
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        parsed = []
        for c, cell in enumerate(row):
            if c == label_idx:
                labels.append(cell.strip())
                continue
            try:
                x = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric value {cell!r} at row {r}, column {header[c]!r}"
                ) from None
            if not math.isfinite(x):
                raise ValueError(f"{path}: non-finite value {cell!r} at row {r}, column {header[c]!r}")
            parsed.append(x)
        values.append(parsed)

    names = [h for c, h in enumerate(header) if c != label_idx]
    lab = None
    if label_idx is not None:
        try:
            lab = np.array([int(float(s)) for s in labels])
        except ValueError:
            # categorical labels: encode by first occurrence
            codes: dict = {}
            lab = np.array([codes.setdefault(s, len(codes)) for s in labels])
    return Dataset(
        values=np.array(values, dtype=np.float64).reshape(len(values), len(names)),
        feature_names=names,
        sample_ids=[f"s{i}" for i in range(len(values))],
        labels=lab,
    )


def save_csv(ds: Dataset, path, include_labels: bool = False, sidecar: bool = False) -> None:
    """Write ``ds`` as CSV; optionally a JSON sidecar with labels and annotations."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(ds.feature_names)
        if include_labels and ds.labels is not None:
            header.append("label")
        w.writerow(header)
        for i in range(ds.n_samples):
            row = [repr(float(x)) for x in ds.values[i]]
            if include_labels and ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            w.writerow(row)
    if sidecar:
        doc = {
            "feature_names": list(ds.feature_names),
            "sample_ids": list(ds.sample_ids),
            "labels": None if ds.labels is None else [int(x) for x in ds.labels],
            "metadata": _jsonable(ds.metadata),
        }
        with open(os.path.splitext(str(path))[0] + ".json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def variance_filter(ds: Dataset, top_k: int, bottom_k: int = 0) -> Dataset:
    """Keep the ``top_k`` highest- and ``bottom_k`` lowest-variance features.

    Sample variance (ddof=1). Ties go to the lower feature index. Kept
    columns stay in their original order.
    """
    d = ds.n_features
    if top_k < 0 or bottom_k < 0:
        raise ValueError("top_k and bottom_k must be non-negative")
    if top_k + bottom_k > d:
        raise ValueError(f"top_k + bottom_k = {top_k + bottom_k} exceeds {d} features")
    var = ds.values.var(axis=0, ddof=1)
    top = list(np.argsort(-var, kind="stable")[:top_k])
    taken = set(top)
    bottom = [j for j in np.argsort(var, kind="stable") if j not in taken][:bottom_k]
    keep = sorted(int(j) for j in top + bottom)
    out = ds.select_features(keep)
    return Dataset(out.values, out.feature_names, out.sample_ids, ds.labels, dict(ds.metadata))


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian blob design: one centre row per cluster over the relevant features."""

    n_relevant: int
    n_irrelevant: int
    cluster_centers: Any
    points_per_cluster: int = 50
    std_dev: float = 0.2
    seed: int = 0

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.cluster_centers, dtype=np.float64))
        if self.n_relevant < 0 or self.n_irrelevant < 0:
            raise ValueError("feature counts must be non-negative")
        if self.n_relevant + self.n_irrelevant < 1:
            raise ValueError("need at least one feature")
        if centers.shape[1] != self.n_relevant:
            raise ValueError(
                f"cluster_centers has {centers.shape[1]} columns, expected {self.n_relevant}"
            )
        if self.points_per_cluster < 1:
            raise ValueError("points_per_cluster must be >= 1")
        if not self.std_dev > 0:
            raise ValueError("std_dev must be positive")
        object.__setattr__(self, "cluster_centers", centers)

    @property
    def n_clusters(self) -> int:
        return self.cluster_centers.shape[0]


def generate_blobs(spec: SyntheticSpec) -> Dataset:
    """Draw ``points_per_cluster`` samples per centre with numpy's PCG64 generator.

    Relevant features are centred on the cluster's centre row, irrelevant
    features on 0 for every cluster. Samples are grouped by cluster.
    """
    rng = np.random.default_rng(spec.seed)
    p, m = spec.n_clusters, spec.points_per_cluster
    d = spec.n_relevant + spec.n_irrelevant
    labels = np.repeat(np.arange(p), m)
    values = rng.normal(0.0, spec.std_dev, size=(p * m, d))
    values[:, : spec.n_relevant] += spec.cluster_centers[labels]
    return Dataset(
        values=values,
        feature_names=_default_names(d),
        sample_ids=[f"s{i}" for i in range(p * m)],
        labels=labels,
    )


# Centre rows below are written feature-major (one list per feature, one
# entry per cluster) to read like the published designs, then transposed.
_EV1_CENTRALITY = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]]
_EV2_CLUSTER = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
_EV4_REDUNDANT = [[1, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 1, 0]]
# One designated pair per discriminability level; level = distinct centre
# tuples the pair shows across the four clusters.
_EV1_PAIRS = [
    [1, 0, 0, 0], [1, 0, 0, 0],  # V1/V2: same split twice -> 2 groups, redundant
    [1, 0, 0, 0], [0, 1, 1, 1],  # V3/V4 -> 2 groups
    [1, 0, 0, 0], [0, 1, 0, 0],  # V5/V6 -> 3 groups
    [1, 1, 0, 0], [1, 0, 1, 0],  # V7/V8 -> 4 groups
]

SUITE_NAMES = ("ev1_centrality", "ev1_pairs", "ev2_cluster", "ev3_relevant", "ev4_redundant")


def pair_separated_clusters(centers: np.ndarray) -> np.ndarray:
    """Number of distinct centre tuples each feature pair shows across clusters.

    ``centers`` is clusters x features (irrelevant features as zero columns).
    Returns a symmetric d x d integer matrix with zero diagonal.
    """
    centers = np.asarray(centers)
    d = centers.shape[1]
    out = np.zeros((d, d), dtype=int)
    for i in range(d):
        for j in range(i + 1, d):
            out[i, j] = out[j, i] = len({(a, b) for a, b in centers[:, [i, j]].tolist()})
    return out


def synthetic_suite(name: str, replicate_seed: int, q: int = 3) -> Dataset:
    """Build one replicate of a named synthetic design with its annotations.

    ``q`` only applies to ``ev3_relevant`` (number of relevant features, 3..7).
    """
    if name == "ev1_centrality":
        rel, centers = 3, np.array(_EV1_CENTRALITY).T
        d = 13
    elif name == "ev1_pairs":
        rel, centers = 8, np.array(_EV1_PAIRS).T
        d = 13
    elif name == "ev2_cluster":
        rel, centers = 4, np.array(_EV2_CLUSTER).T
        d = 13
    elif name == "ev3_relevant":
        if not 3 <= q <= 7:
            raise ValueError(f"q must be in [3, 7], got {q}")
        rel, d = q, 13
        # relevant feature i is 1 in cluster i+1, so cluster 0 sits at the origin
        centers = np.vstack([np.zeros(q), np.eye(q)])
    elif name == "ev4_redundant":
        rel, centers = 6, np.array(_EV4_REDUNDANT).T
        d = 10
    else:
        raise ValueError(f"unknown synthetic suite {name!r}; choose from {SUITE_NAMES}")

    spec = SyntheticSpec(
        n_relevant=rel,
        n_irrelevant=d - rel,
        cluster_centers=centers,
        seed=replicate_seed,
    )
    ds = generate_blobs(spec)
    full_centers = np.hstack([spec.cluster_centers, np.zeros((spec.n_clusters, d - rel))])
    meta: dict = {
        "suite": name,
        "seed": int(replicate_seed),
        "cluster_centers": full_centers.tolist(),
        "relevance": ["relevant"] * rel + ["irrelevant"] * (d - rel),
        "std_dev": spec.std_dev,
        "points_per_cluster": spec.points_per_cluster,
    }
    if name == "ev1_pairs":
        meta["designated_pairs"] = [[0, 1], [2, 3], [4, 5], [6, 7]]
        meta["pair_separated_clusters"] = pair_separated_clusters(full_centers).tolist()
    elif name == "ev2_cluster":
        # cluster g is singled out by feature g alone
        meta["cluster_specific"] = {g: g for g in range(4)}
    elif name == "ev3_relevant":
        meta["q"] = q
    elif name == "ev4_redundant":
        meta["relevance"] = ["redundant"] * 6 + ["irrelevant"] * 4
        meta["redundant_groups"] = [[0, 1], [2, 3], [4, 5]]
    return Dataset(ds.values, ds.feature_names, ds.sample_ids, ds.labels, meta)


# Table of the benchmark collection. Only iris and wine ship with
# scikit-learn; the rest must be supplied as CSV by the user.
BENCHMARK_MANIFEST = {
    "iris": {"samples": 150, "features": 4, "clusters": 3, "source": "https://archive.ics.uci.edu/dataset/53/iris", "sha256": None},
    "liver": {"samples": 345, "features": 6, "clusters": 2, "source": "https://archive.ics.uci.edu/dataset/60/liver+disorders", "sha256": None},
    "ecoli": {"samples": 336, "features": 7, "clusters": 8, "source": "https://archive.ics.uci.edu/dataset/39/ecoli", "sha256": None},
    "breast_tissue": {"samples": 106, "features": 9, "clusters": 6, "source": "https://archive.ics.uci.edu/dataset/192/breast+tissue", "sha256": None},
    "glass": {"samples": 214, "features": 9, "clusters": 4, "source": "https://archive.ics.uci.edu/dataset/42/glass+identification", "sha256": None},
    "wine": {"samples": 178, "features": 13, "clusters": 3, "source": "https://archive.ics.uci.edu/dataset/109/wine", "sha256": None},
    "lymphography": {"samples": 148, "features": 18, "clusters": 4, "source": "https://archive.ics.uci.edu/dataset/63/lymphography", "sha256": None},
    "parkinson": {"samples": 195, "features": 22, "clusters": 2, "source": "https://archive.ics.uci.edu/dataset/174/parkinsons", "sha256": None},
    "ionosphere": {"samples": 351, "features": 34, "clusters": 2, "source": "https://archive.ics.uci.edu/dataset/52/ionosphere", "sha256": None},
    "sonar": {"samples": 208, "features": 60, "clusters": 2, "source": "https://archive.ics.uci.edu/dataset/151/connectionist+bench+sonar+mines+vs+rocks", "sha256": None},
}


def load_benchmark(name: str) -> Dataset:
    """Load a bundled benchmark (``iris`` or ``wine``) from scikit-learn."""
    from sklearn import datasets

    loaders = {"iris": datasets.load_iris, "wine": datasets.load_wine}
    if name not in loaders:
        raise ValueError(
            f"benchmark {name!r} is not bundled; supply it as CSV (see BENCHMARK_MANIFEST)"
        )
    bunch = loaders[name]()
    names = [str(f).replace(" (cm)", "").replace(" ", "_") for f in bunch.feature_names]
    return Dataset(
        values=bunch.data,
        feature_names=names,
        sample_ids=[f"s{i}" for i in range(bunch.data.shape[0])],
        labels=np.asarray(bunch.target, dtype=int),
        metadata={"benchmark": name},
    )
