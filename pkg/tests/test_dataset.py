import json

import numpy as np
import pytest
from scipy import stats

from forestgraph.dataset import (
    Dataset,
    SyntheticSpec,
    generate_blobs,
    load_csv,
    pair_separated_clusters,
    save_csv,
    synthetic_suite,
    variance_filter,
)


@pytest.fixture
def small_csv(tmp_path):
    path = tmp_path / "small.csv"
    path.write_text("a,b\n1,2\n3,4\n5,6\n")
    return path


def test_load_csv_with_header(small_csv):
    ds = load_csv(small_csv)
    assert ds.values.shape == (3, 2)
    assert ds.feature_names == ("a", "b")
    np.testing.assert_array_equal(ds.values, [[1, 2], [3, 4], [5, 6]])
    assert ds.labels is None


def test_load_csv_label_column(small_csv):
    ds = load_csv(small_csv, label_column="b")
    assert ds.n_features == 1
    assert ds.labels.tolist() == [2, 4, 6]


def test_load_csv_bad_cell_names_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\nx,4\n")
    with pytest.raises(ValueError, match="row 2"):
        load_csv(path)


def test_load_csv_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "missing.csv")
    dup = tmp_path / "dup.csv"
    dup.write_text("a,a\n1,2\n3,4\n")
    with pytest.raises(ValueError, match="duplicate"):
        load_csv(dup)


def test_load_csv_without_header(tmp_path):
    path = tmp_path / "raw.csv"
    path.write_text("1,2,3\n4,5,6\n")
    ds = load_csv(path, has_header=False)
    assert ds.feature_names == ("V1", "V2", "V3")


def test_csv_round_trip(tmp_path):
    ds = synthetic_suite("ev1_centrality", 3)
    path = tmp_path / "ev1.csv"
    save_csv(ds, path, include_labels=True, sidecar=True)
    back = load_csv(path, label_column="label")
    np.testing.assert_array_equal(back.values, ds.values)
    np.testing.assert_array_equal(back.labels, ds.labels)
    side = json.loads((tmp_path / "ev1.json").read_text())
    assert side["metadata"]["relevance"][:3] == ["relevant"] * 3


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((1, 2)), ["a", "b"], ["s0"])
    with pytest.raises(ValueError):
        Dataset(np.array([[0, np.nan], [1, 2]]), ["a", "b"], ["s0", "s1"])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), ["a", "a"], ["s0", "s1"])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), ["a", "b"], ["s0", "s1"], labels=[1])
    ds = Dataset(np.zeros((2, 2)), ["a", "b"], ["s0", "s1"])
    with pytest.raises(ValueError):
        ds.values[0, 0] = 1.0


def _ds(cols):
    X = np.column_stack(cols).astype(float)
    return Dataset(X, [f"f{j}" for j in range(X.shape[1])], [f"s{i}" for i in range(X.shape[0])])


def test_variance_filter_keeps_highest():
    # variances 0, 1, 4
    ds = _ds([[1, 1, 1], [0, 1, 2], [0, 2, 4]])
    assert np.allclose(ds.values.var(axis=0, ddof=1), [0, 1, 4])
    out = variance_filter(ds, top_k=1, bottom_k=0)
    assert out.feature_names == ("f2",)


def test_variance_filter_identity_and_ties():
    ds = _ds([[0, 1, 2], [5, 6, 7], [1, 2, 3]])
    assert variance_filter(ds, 3, 0).feature_names == ds.feature_names
    assert variance_filter(ds, 1, 0).feature_names == ("f0",)
    assert variance_filter(ds, 1, 1).feature_names == ("f0", "f1")
    with pytest.raises(ValueError):
        variance_filter(ds, 2, 2)


def test_variance_filter_top_and_bottom_order_preserved():
    rng = np.random.default_rng(0)
    scales = np.array([3.0, 0.1, 2.0, 0.5, 1.0])
    ds = _ds(list((rng.normal(size=(40, 5)) * scales).T))
    out = variance_filter(ds, top_k=2, bottom_k=1)
    assert out.feature_names == ("f0", "f1", "f2")


def test_generate_blobs_ev1_shape():
    ds = synthetic_suite("ev1_centrality", 0)
    assert ds.values.shape == (200, 13)
    assert sorted(set(ds.labels.tolist())) == [0, 1, 2, 3]
    assert ds.feature_names[0] == "V1" and ds.feature_names[-1] == "V13"


def test_generate_blobs_tiny_noise_hits_centres():
    centers = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0]])
    spec = SyntheticSpec(3, 2, centers, std_dev=1e-9, seed=4)
    ds = generate_blobs(spec)
    for g in range(4):
        means = ds.values[ds.labels == g].mean(axis=0)
        np.testing.assert_allclose(means[:3], centers[g], atol=1e-6)
        np.testing.assert_allclose(means[3:], 0, atol=1e-6)


def test_generate_blobs_deterministic():
    spec = SyntheticSpec(2, 1, [[1, 0], [0, 1]], seed=11)
    a, b = generate_blobs(spec), generate_blobs(spec)
    assert a.values.tobytes() == b.values.tobytes()
    c = generate_blobs(SyntheticSpec(2, 1, [[1, 0], [0, 1]], seed=12))
    assert not np.array_equal(a.values, c.values)


def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(2, 1, [[1, 0, 0]])
    with pytest.raises(ValueError):
        SyntheticSpec(1, 1, [[1]], std_dev=0)
    with pytest.raises(ValueError):
        SyntheticSpec(1, 1, [[1]], points_per_cluster=0)


def test_ev3_design():
    ds = synthetic_suite("ev3_relevant", 0, q=3)
    assert ds.n_features == 13
    centers = np.array(ds.metadata["cluster_centers"])
    assert centers.shape == (4, 13)
    # feature-major: V1 = [0,1,0,0], V2 = [0,0,1,0], V3 = [0,0,0,1]
    np.testing.assert_array_equal(centers[:, 0], [0, 1, 0, 0])
    np.testing.assert_array_equal(centers[:, 1], [0, 0, 1, 0])
    np.testing.assert_array_equal(centers[:, 2], [0, 0, 0, 1])
    assert ds.metadata["relevance"].count("relevant") == 3
    for q in range(3, 8):
        d = synthetic_suite("ev3_relevant", 0, q=q)
        assert len(set(d.labels.tolist())) == q + 1
    with pytest.raises(ValueError):
        synthetic_suite("ev3_relevant", 0, q=8)


def test_ev4_design():
    ds = synthetic_suite("ev4_redundant", 0)
    centers = np.array(ds.metadata["cluster_centers"])
    assert ds.n_features == 10
    np.testing.assert_array_equal(centers[:, 0], centers[:, 1])
    np.testing.assert_array_equal(centers[:, 0], [1, 0, 0, 0])
    np.testing.assert_array_equal(centers[:, 2], [0, 1, 0, 0])
    np.testing.assert_array_equal(centers[:, 4], [0, 0, 1, 0])
    assert np.all(centers[:, 6:] == 0)


def test_ev2_design():
    ds = synthetic_suite("ev2_cluster", 0)
    assert ds.n_features == 13
    assert ds.metadata["relevance"].count("relevant") == 4
    assert ds.metadata["relevance"].count("irrelevant") == 9


def test_ev1_pairs_levels():
    ds = synthetic_suite("ev1_pairs", 0)
    lv = np.array(ds.metadata["pair_separated_clusters"])
    # V3/V4 centred [1,0,0,0]/[0,1,1,1]: two groups
    assert lv[2, 3] == 2
    assert lv[4, 5] == 3
    assert lv[6, 7] == 4
    assert lv[8, 9] == 1  # two irrelevant features
    assert set(lv[np.triu_indices(13, 1)].tolist()) == {1, 2, 3, 4}


def test_pair_separated_clusters_brute():
    centers = np.array([[1, 0, 1], [0, 1, 1], [0, 1, 0]])
    lv = pair_separated_clusters(centers)
    assert lv[0, 1] == 2 and lv[0, 2] == 3 and lv[1, 2] == 3


def test_unknown_suite():
    with pytest.raises(ValueError):
        synthetic_suite("nope", 0)


def test_blob_means_concentrate():
    spec = SyntheticSpec(3, 0, np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0]]), seed=0)
    ok = 0
    for r in range(30):
        ds = generate_blobs(SyntheticSpec(3, 0, spec.cluster_centers, seed=r))
        bound = 5 * 0.2 / np.sqrt(50)
        good = all(
            np.all(np.abs(ds.values[ds.labels == g].mean(axis=0) - spec.cluster_centers[g]) <= bound)
            for g in range(4)
        )
        ok += good
    assert ok >= 0.99 * 30


def test_irrelevant_features_indistinguishable_across_clusters():
    pvals = []
    for r in range(30):
        ds = synthetic_suite("ev1_centrality", r)
        x = ds.values[ds.labels == 0, 5]
        y = ds.values[ds.labels == 1, 5]
        pvals.append(stats.ttest_ind(x, y, equal_var=False).pvalue)
    assert np.mean(pvals) > 0.01
