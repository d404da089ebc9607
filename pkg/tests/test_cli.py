"""Exit codes, artifact wiring, and output text of the command line."""

import json

import pytest

from hbtm.cli import PREDICTIVE_CAVEAT, main
from hbtm.exceptions import NumericalError

from test_pipeline import tiny_posts


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    tiny_posts(root / "posts.jsonl")
    (root / "em.json").write_text(json.dumps(
        {"max_iter": 3, "bin_width_days": 8.0, "tau_max_days": 4.0}))
    return root


@pytest.fixture(scope="module")
def fitted_workspace(workspace):
    assert main(["corpus", "marks", str(workspace / "posts.jsonl"),
                 "--n-words", "5",
                 "--dictionary", str(workspace / "dict.txt"),
                 "--out-events", str(workspace / "events.jsonl"),
                 "--out-roster", str(workspace / "roster.json")]) == 0
    assert main(["fit", str(workspace / "events.jsonl"),
                 "--config", str(workspace / "em.json"),
                 "--out-dir", str(workspace / "fit")]) == 0
    return workspace


def test_ingest_writes_posts_and_roster(workspace, capsys):
    code = main(["corpus", "ingest", str(workspace / "posts.jsonl"),
                 "--out-posts", str(workspace / "norm.jsonl"),
                 "--out-roster", str(workspace / "roster0.json")])
    assert code == 0
    assert "ingested 40 posts from 2 nodes" in capsys.readouterr().out
    assert (workspace / "norm.jsonl").exists()
    roster = json.loads((workspace / "roster0.json").read_text())
    assert roster["ids"] == ["ann", "bob"]


def test_expand_reports_keywords(workspace, capsys):
    code = main(["corpus", "expand", str(workspace / "posts.jsonl"),
                 "--seeds", "alpha", "--ratio-min", "1.2",
                 "--count-min", "2",
                 "--out", str(workspace / "expansion.json")])
    assert code == 0
    out = capsys.readouterr().out
    assert "keywords after" in out
    doc = json.loads((workspace / "expansion.json").read_text())
    assert doc["seeds"] == ["alpha"]
    assert "alpha" in doc["keywords"]


def test_marks_and_fit_artifacts(fitted_workspace, capsys):
    ws = fitted_workspace
    assert (ws / "dict.txt").exists()
    assert (ws / "events.jsonl").exists()
    for name in ["params.json", "branching.jsonl", "trace.json"]:
        assert (ws / "fit" / name).exists()
    trace = json.loads((ws / "fit" / "trace.json").read_text())
    assert trace["iterations"] <= 3
    assert len(trace["log_likelihood_trace"]) == trace["iterations"] + 1


def test_topics_command(fitted_workspace, capsys):
    ws = fitted_workspace
    code = main(["topics", str(ws / "events.jsonl"),
                 str(ws / "fit" / "branching.jsonl"),
                 "--min-size", "1",
                 "--dictionary", str(ws / "dict.txt"),
                 "--roster", str(ws / "roster.json"),
                 "--out-dir", str(ws / "topics")])
    assert code == 0
    assert "cluster(s) of size >= 1" in capsys.readouterr().out
    clusters = json.loads((ws / "topics" / "clusters.json").read_text())
    assert clusters, "expected at least one cluster"
    assert (ws / "topics" / "timeline.csv").exists()
    forest = json.loads((ws / "topics" / "forest.json").read_text())
    assert len(forest["parents"]) == 40


def test_network_command_prints_caveat_and_rankings(fitted_workspace,
                                                    capsys):
    ws = fitted_workspace
    code = main(["network", str(ws / "events.jsonl"),
                 str(ws / "fit" / "branching.jsonl"),
                 "--threshold", "0.01",
                 "--roster", str(ws / "roster.json"),
                 "--params", str(ws / "fit" / "params.json"),
                 "--out-dir", str(ws / "net")])
    assert code == 0
    out = capsys.readouterr().out
    assert PREDICTIVE_CAVEAT in out
    assert "top in-degree:" in out
    assert "ann" in out
    for name in ["network.json", "network.dot", "edges.csv", "rankings.csv",
                 "activity.json"]:
        assert (ws / "net" / name).exists()
    activity = json.loads((ws / "net" / "activity.json").read_text())
    assert activity[0]["theta_influence"] is not None


def test_coherence_command(fitted_workspace, capsys):
    ws = fitted_workspace
    main(["topics", str(ws / "events.jsonl"),
          str(ws / "fit" / "branching.jsonl"), "--min-size", "1",
          "--dictionary", str(ws / "dict.txt"),
          "--out-dir", str(ws / "topics2")])
    capsys.readouterr()
    code = main(["coherence", str(ws / "topics2" / "clusters.json"),
                 str(ws / "posts.jsonl"),
                 "--out", str(ws / "coherence.json")])
    assert code == 0
    assert "mean over clusters" in capsys.readouterr().out
    doc = json.loads((ws / "coherence.json").read_text())
    assert {"per_cluster", "mean_of_clusters", "pooled_pairs",
            "skipped"} <= doc.keys()


def test_simulate_command(fitted_workspace, capsys):
    ws = fitted_workspace
    code = main(["simulate", str(ws / "fit" / "params.json"),
                 "--seed", "1",
                 "--out-events", str(ws / "sim.jsonl"),
                 "--out-truth", str(ws / "sim_truth.jsonl")])
    assert code == 0
    assert "simulated" in capsys.readouterr().out
    meta = json.loads((ws / "sim.jsonl").read_text().splitlines()[0])
    assert meta == {"n_nodes": 2, "n_words": 5}


def test_pipeline_command_and_global_config(workspace, capsys):
    cfg = {
        "input_path": str(workspace / "posts.jsonl"),
        "output_dir": str(workspace / "pipe"),
        "n_words": 5,
        "em": {"max_iter": 2, "bin_width_days": 8.0, "tau_max_days": 4.0},
        "min_cluster_size": 1,
        "subtopic_min_size": 1,
        "network_threshold": 0.01,
        "subtopics": [["alpha"]],
    }
    path = workspace / "pipeline.json"
    path.write_text(json.dumps(cfg))
    assert main(["pipeline", "--config", str(path)]) == 0
    assert "pipeline finished" in capsys.readouterr().out
    assert (workspace / "pipe" / "manifest.json").exists()
    # global --config is the fallback when the subcommand gets none
    cfg["output_dir"] = str(workspace / "pipe2")
    path.write_text(json.dumps(cfg))
    assert main(["--config", str(path), "pipeline"]) == 0
    capsys.readouterr()
    assert main(["pipeline"]) == 2


class TestExitCodes:
    def test_usage_errors_exit_2(self, capsys):
        assert main(["fit"]) == 2
        assert main(["no-such-command"]) == 2
        assert main(["--threads", "0", "corpus"]) == 2
        capsys.readouterr()

    def test_config_error_exits_2(self, workspace, capsys):
        bad = workspace / "bad.json"
        bad.write_text(json.dumps({"input_path": "x", "output_dir": "y",
                                   "bogus_key": 1}))
        assert main(["pipeline", "--config", str(bad)]) == 2
        assert "bogus_key" in capsys.readouterr().err

    def test_data_error_exits_3(self, workspace, capsys):
        bad = workspace / "badposts.jsonl"
        bad.write_text('{"post_id": "p", "timestamp": 1.0, "text": "x"}\n')
        assert main(["corpus", "ingest", str(bad)]) == 3
        assert "node_id" in capsys.readouterr().err

    def test_numerical_error_exits_4(self, fitted_workspace, monkeypatch,
                                     capsys):
        import hbtm.cli as cli_mod

        def explode(*a, **k):
            raise NumericalError("objective decreased at iteration 2")

        monkeypatch.setattr(cli_mod, "fit", explode)
        ws = fitted_workspace
        code = main(["fit", str(ws / "events.jsonl"),
                     "--config", str(ws / "em.json"),
                     "--out-dir", str(ws / "fit4")])
        assert code == 4
        assert "numerical failure" in capsys.readouterr().err

    def test_help_exits_0(self, capsys):
        assert main(["--help"]) == 0
        assert "pipeline" in capsys.readouterr().out
        assert main(["corpus", "--help"]) == 0
        capsys.readouterr()
