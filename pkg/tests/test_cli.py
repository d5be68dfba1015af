import json

from click.testing import CliRunner

from forestgraph.cli import main


def _run(args, cwd):
    runner = CliRunner()
    return runner.invoke(main, ["--out-dir", str(cwd)] + args, catch_exceptions=False)


def test_command_chain(tmp_path):
    r = _run(["--trees", "8", "generate", "ev2_cluster"], tmp_path)
    assert r.exit_code == 0, r.output
    csv = str(tmp_path / "ev2_cluster.csv")
    assert _run(["--trees", "8", "cluster", csv, "-p", "4", "--label-column", "label"], tmp_path).exit_code == 0
    r = _run(["graph", str(tmp_path / "forest.json"), "--assignments", str(tmp_path / "assignments.csv"),
              "--input", csv, "--label-column", "label", "--criterion", "level"], tmp_path)
    assert r.exit_code == 0 and "5 graph(s)" in r.output
    assert _run(["rank", str(tmp_path / "graph_overall.json")], tmp_path).exit_code == 0
    assert (tmp_path / "centrality.csv").read_text().startswith("rank,feature,centrality\n")
    r = _run(["select", str(tmp_path / "graph_overall.json"), "--k", "3", "--method", "brute", "--objective", "tw"],
             tmp_path)
    assert r.exit_code == 0
    doc = json.loads((tmp_path / "selection.json").read_text())
    assert doc["objective"] == "max_TW" and len(doc["selected"]) == 3
    r = _run(["select", str(tmp_path / "graph_overall.json"), "--k", "3", "--criterion", "sample"], tmp_path)
    assert r.exit_code == 1 and "error [select]" in r.output


def test_run_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        r = _run(["--trees", "6", "--seed", "3", "run", "--suite", "ev1_centrality", "--k", "3"], out)
        assert r.exit_code == 0, r.output
    for name in ("selection.json", "graph_overall.json", "centrality.csv", "assignments.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_experiment_and_benchmark(tmp_path):
    r = _run(["--trees", "5", "--replicates", "1", "experiment", "ev1", "--criterion", "sample"], tmp_path)
    assert r.exit_code == 0
    doc = json.loads((tmp_path / "experiment_ev1.json").read_text())
    assert "sample" in doc["results"]
    r = _run(["--trees", "5", "--replicates", "1", "benchmark", "iris"], tmp_path)
    assert r.exit_code == 0 and r.output.startswith("k,graph_mean")


def test_stage_tagged_failure(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\nx,3\n")
    r = _run(["cluster", str(bad), "-p", "2"], tmp_path)
    assert r.exit_code == 1
    assert "error [cluster]" in r.output and "row 2" in r.output
