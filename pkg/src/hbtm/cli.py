"""Command-line front end.

Subcommands mirror the library layers: ``corpus`` prepares posts,
``fit`` estimates parameters, ``simulate`` draws synthetic event
streams, ``topics``/``network``/``coherence`` post-process a fit, and
``pipeline`` chains everything from one JSON config.  Exit codes: 0
success, 2 bad configuration or usage, 3 bad data, 4 numerical
failure.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from . import corpus as corpus_mod
from .events import EventSequence, NodeRoster
from .exceptions import ConfigError, DataError, NumericalError
from .inference import BranchingMatrix, FitConfig, fit
from .influence import (activity_decomposition, degree_rankings, export_graph,
                        influence_network, write_rankings_csv)
from .io import (atomic_write, dump_json, read_events, read_roster,
                 write_events, write_parents, write_posts, write_roster)
from .model import ModelParams
from .pipeline import PipelineConfig, run_pipeline
from .simulator import as_sequence, simulate
from .topics import (coherence_report, extract_clusters, sample_forest,
                     timeline_export, write_timeline_csv)

logger = logging.getLogger("hbtm.cli")

# shown before network output; these weights are not causal estimates
PREDICTIVE_CAVEAT = (
    "note: edge weights measure how strongly one node's events predict "
    "another's in time; shared outside drivers are not controlled for, "
    "so the weights are not causal effect estimates.")


def _set_thread_count(threads: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(threads)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Default config file for subcommands that take one.")
@click.option("--threads", type=int, default=None,
              help="Cap BLAS/OpenMP thread pools (also fixes determinism).")
@click.option("--verbose", is_flag=True, help="Debug-level logging.")
@click.pass_context
def cli(ctx, config_path, threads, verbose):
    """Marked Hawkes topic-and-influence toolkit."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if threads is not None:
        if threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {threads}")
        _set_thread_count(threads)
    ctx.obj = {"config_path": config_path}


def _config_path(ctx, local) -> str:
    path = local or ctx.obj.get("config_path")
    if path is None:
        raise ConfigError("no config file given (use --config)")
    return path


def _load_stopwords(path):
    return corpus_mod.load_stopwords(path) if path else frozenset()


@cli.group("corpus")
def corpus_group():
    """Prepare raw posts: ingest, keyword expansion, mark building."""


@corpus_group.command("ingest")
@click.argument("input_path", type=click.Path(exists=True))
@click.option("--epoch", default="2020-01-01", show_default=True,
              help="Timestamps become fractional days since this instant.")
@click.option("--format", "fmt", default="jsonl", show_default=True,
              type=click.Choice(["jsonl", "csv"]))
@click.option("--out-posts", default="posts.jsonl", show_default=True)
@click.option("--out-roster", default="roster.json", show_default=True)
def corpus_ingest(input_path, epoch, fmt, out_posts, out_roster):
    """Normalize and time-sort raw posts; write the node roster."""
    posts = corpus_mod.ingest_posts(input_path, epoch, format=fmt)
    roster = NodeRoster.from_posts(posts)
    write_posts(out_posts, posts)
    write_roster(out_roster, roster)
    click.echo(f"ingested {len(posts)} posts from {len(roster)} nodes "
               f"-> {out_posts}, {out_roster}")


@corpus_group.command("expand")
@click.argument("input_path", type=click.Path(exists=True))
@click.option("--seeds", required=True,
              help="Comma-separated seed keywords.")
@click.option("--epoch", default="2020-01-01", show_default=True)
@click.option("--format", "fmt", default="jsonl", show_default=True,
              type=click.Choice(["jsonl", "csv"]))
@click.option("--ratio-min", default=10.0, show_default=True)
@click.option("--count-min", default=5, show_default=True)
@click.option("--max-rounds", default=5, show_default=True)
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True),
              default=None)
@click.option("--out", "out_path", default="expansion.json",
              show_default=True)
def corpus_expand(input_path, seeds, epoch, fmt, ratio_min, count_min,
                  max_rounds, stopwords_path, out_path):
    """Grow a keyword list by document-frequency enrichment."""
    posts = corpus_mod.ingest_posts(input_path, epoch, format=fmt)
    seed_list = [s.strip() for s in seeds.split(",") if s.strip()]
    expansion = corpus_mod.expand_keywords(
        posts, seed_list, ratio_min=ratio_min, count_min=count_min,
        max_iter=max_rounds, stopwords=_load_stopwords(stopwords_path))
    with atomic_write(out_path) as fh:
        fh.write(dump_json({
            "seeds": sorted(expansion.seeds),
            "keywords": sorted(expansion.keywords),
            "added_per_round": [sorted(s) for s in expansion.added_per_round],
            "converged": expansion.converged,
            "no_seed_matches": expansion.warning,
        }))
    click.echo(f"{len(expansion)} keywords after {expansion.n_rounds} "
               f"round(s); converged: {expansion.converged}")
    if expansion.warning:
        click.echo("warning: no post matched the seed keywords", err=True)
    click.echo(", ".join(sorted(expansion.keywords)))


@corpus_group.command("marks")
@click.argument("input_path", type=click.Path(exists=True))
@click.option("--epoch", default="2020-01-01", show_default=True)
@click.option("--format", "fmt", default="jsonl", show_default=True,
              type=click.Choice(["jsonl", "csv"]))
@click.option("--dictionary", "dict_path", default="dictionary.txt",
              show_default=True,
              help="Loaded if it exists, otherwise built and saved here.")
@click.option("--n-words", default=425, show_default=True)
@click.option("--keywords", default=None,
              help="Comma-separated list; keep only posts containing one.")
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True),
              default=None)
@click.option("--out-events", default="events.jsonl", show_default=True)
@click.option("--out-roster", default=None,
              help="Also write the node roster here.")
def corpus_marks(input_path, epoch, fmt, dict_path, n_words, keywords,
                 stopwords_path, out_events, out_roster):
    """Turn posts into time-sorted events with binary word marks."""
    stopwords = _load_stopwords(stopwords_path)
    posts = corpus_mod.ingest_posts(input_path, epoch, format=fmt)
    if keywords:
        wanted = {w.strip() for w in keywords.split(",") if w.strip()}
        posts = corpus_mod.filter_by_keywords(posts, wanted, stopwords)
        if not posts:
            raise DataError("keyword filtering removed every post")
    roster = NodeRoster.from_posts(posts)
    if Path(dict_path).exists():
        dictionary = corpus_mod.Dictionary.load(dict_path)
    else:
        dictionary = corpus_mod.build_dictionary(posts, stopwords=stopwords,
                                                 n_words=n_words)
        dictionary.save(dict_path)
    marked = corpus_mod.to_marked_events(posts, dictionary, roster,
                                         stopwords=stopwords)
    events = EventSequence.from_marked_events(marked, len(roster),
                                              dictionary.n_words)
    write_events(out_events, events)
    if out_roster:
        write_roster(out_roster, roster)
    click.echo(f"{events.n_events} events, {len(roster)} nodes, "
               f"{dictionary.n_words} dictionary words -> {out_events}")


@cli.command("fit")
@click.argument("events_path", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Fitting settings as JSON.")
@click.option("--out-dir", default=".", show_default=True)
@click.pass_context
def fit_command(ctx, events_path, config_path, out_dir):
    """Estimate model parameters by expectation-maximization."""
    path = config_path or ctx.obj.get("config_path")
    fit_cfg = FitConfig.from_file(path) if path else FitConfig()
    events = read_events(events_path)
    report = fit(events, fit_cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.final_params.save(out / "params.json")
    report.branching.to_jsonl(out / "branching.jsonl")
    with atomic_write(out / "trace.json") as fh:
        fh.write(dump_json({
            "iterations": report.iterations,
            "converged": report.converged,
            "restarts_used": report.restarts_used,
            "log_likelihood_trace": [float(v) for v
                                     in report.log_likelihood_trace],
        }))
    click.echo(f"fit finished: {report.iterations} iteration(s), "
               f"converged: {report.converged}, "
               f"objective {report.log_likelihood_trace[-1]:.4f}")
    click.echo(f"wrote {out / 'params.json'}, {out / 'branching.jsonl'}, "
               f"{out / 'trace.json'}")


@cli.command("simulate")
@click.argument("params_path", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--t-end", type=float, default=None,
              help="Stop early (defaults to the background window end).")
@click.option("--out-events", default="simulated.jsonl", show_default=True)
@click.option("--out-truth", default="simulated_truth.jsonl",
              show_default=True,
              help="Ground-truth parent index per event.")
def simulate_command(params_path, seed, t_end, out_events, out_truth):
    """Draw a synthetic event stream from saved parameters."""
    params = ModelParams.load(params_path)
    sim = simulate(params, t_end=t_end, seed=seed)
    events, parents = as_sequence(sim, params.n_nodes, params.n_words)
    write_events(out_events, events)
    write_parents(out_truth, parents)
    spontaneous = int((parents < 0).sum())
    click.echo(f"simulated {events.n_events} events "
               f"({spontaneous} spontaneous) -> {out_events}, {out_truth}")


@cli.command("topics")
@click.argument("events_path", type=click.Path(exists=True))
@click.argument("branching_path", type=click.Path(exists=True))
@click.option("--mode", default="map", show_default=True,
              type=click.Choice(["map", "sample"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--min-size", default=11, show_default=True)
@click.option("--top-words", default=8, show_default=True)
@click.option("--dictionary", "dict_path", type=click.Path(exists=True),
              default=None, help="Word labels for cluster summaries.")
@click.option("--roster", "roster_path", type=click.Path(exists=True),
              default=None, help="Node roster for dominant-party labels.")
@click.option("--out-dir", default=".", show_default=True)
def topics_command(events_path, branching_path, mode, seed, min_size,
                   top_words, dict_path, roster_path, out_dir):
    """Group events into topic clusters via their inferred parents."""
    events = read_events(events_path)
    q = BranchingMatrix.from_jsonl(branching_path)
    dictionary = corpus_mod.Dictionary.load(dict_path) if dict_path else None
    attr_list = None
    if roster_path:
        roster = read_roster(roster_path)
        attr_list = [roster.attr(i, "party") for i in range(len(roster))]
    forest = sample_forest(q, mode=mode, seed=seed)
    clusters = extract_clusters(forest, events, min_size=min_size,
                                dictionary=dictionary, node_attrs=attr_list,
                                top_k=top_words)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with atomic_write(out / "forest.json") as fh:
        fh.write(dump_json({"parents": forest.parents.tolist()}))
    with atomic_write(out / "clusters.json") as fh:
        fh.write(dump_json([c.to_dict() for c in clusters]))
    write_timeline_csv(timeline_export(clusters), out / "timeline.csv")
    click.echo(f"{len(clusters)} cluster(s) of size >= {min_size} "
               f"-> {out / 'clusters.json'}, {out / 'timeline.csv'}")
    for c in clusters[:5]:
        words = " ".join(w for w, _ in c.top_words[:5])
        click.echo(f"  size {c.size:4d}  t [{c.start_t:.2f}, {c.end_t:.2f}]"
                   f"  {words}")


@cli.command("network")
@click.argument("events_path", type=click.Path(exists=True))
@click.argument("branching_path", type=click.Path(exists=True))
@click.option("--threshold", default=10.0, show_default=True,
              help="Edges below this weight are pruned from views.")
@click.option("--roster", "roster_path", type=click.Path(exists=True),
              default=None)
@click.option("--params", "params_path", type=click.Path(exists=True),
              default=None, help="Adds the rate-matrix influence reading.")
@click.option("--top", default=5, show_default=True)
@click.option("--out-dir", default=".", show_default=True)
def network_command(events_path, branching_path, threshold, roster_path,
                    params_path, top, out_dir):
    """Aggregate attributions into a directed influence network."""
    events = read_events(events_path)
    q = BranchingMatrix.from_jsonl(branching_path)
    node_ids = None
    node_attrs = None
    if roster_path:
        roster = read_roster(roster_path)
        node_ids = roster.ids
        node_attrs = [roster.attrs.get(nid, {}) for nid in roster.ids]
    params = ModelParams.load(params_path) if params_path else None
    net = influence_network(q, events, threshold=threshold,
                            node_ids=node_ids, node_attrs=node_attrs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, fmt in [("network.json", "json"), ("network.dot", "dot"),
                      ("edges.csv", "csv")]:
        with atomic_write(out / name) as fh:
            fh.write(export_graph(net, format=fmt))
    write_rankings_csv(net, out / "rankings.csv")
    activity = activity_decomposition(q, events, params=params,
                                      node_ids=net.node_ids)
    with atomic_write(out / "activity.json") as fh:
        fh.write(dump_json([a.to_dict() for a in activity]))

    click.echo(PREDICTIVE_CAVEAT)
    kept = net.edges()
    click.echo(f"{len(kept)} edge(s) with weight >= {threshold:g} "
               f"-> {out / 'network.dot'}")
    ranks = degree_rankings(net, k=min(top, net.n_nodes))
    click.echo("top in-degree:  " + ", ".join(
        f"{nid} ({v:.1f})" for nid, v in ranks["in"]))
    click.echo("top out-degree: " + ", ".join(
        f"{nid} ({v:.1f})" for nid, v in ranks["out"]))


@cli.command("coherence")
@click.argument("clusters_path", type=click.Path(exists=True))
@click.argument("posts_path", type=click.Path(exists=True))
@click.option("--epoch", default="2020-01-01", show_default=True)
@click.option("--format", "fmt", default="jsonl", show_default=True,
              type=click.Choice(["jsonl", "csv"]))
@click.option("--eps", default=1.0, show_default=True)
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True),
              default=None)
@click.option("--out", "out_path", default="coherence.json",
              show_default=True)
def coherence_command(clusters_path, posts_path, epoch, fmt, eps,
                      stopwords_path, out_path):
    """Score cluster word lists against post co-occurrence."""
    from .topics import TopicCluster
    with open(clusters_path, encoding="utf-8") as fh:
        clusters = [TopicCluster.from_dict(d) for d in json.load(fh)]
    stopwords = _load_stopwords(stopwords_path)
    posts = corpus_mod.ingest_posts(posts_path, epoch, format=fmt)
    documents = [frozenset(corpus_mod.tokenize(p.text, stopwords))
                 for p in posts]
    report = coherence_report(clusters, documents, eps=eps)
    with atomic_write(out_path) as fh:
        fh.write(dump_json(report.to_dict()))
    click.echo(f"{len(report.per_cluster)} cluster(s) scored, "
               f"{len(report.skipped)} skipped")
    click.echo(f"mean over clusters: {report.mean_of_clusters:.4f}  "
               f"pooled over pairs: {report.pooled_pairs:.4f}")


@cli.command("pipeline")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Pipeline config JSON (falls back to the global flag).")
@click.pass_context
def pipeline_command(ctx, config_path):
    """Run every stage from one config; write hashed artifacts."""
    cfg = PipelineConfig.from_file(_config_path(ctx, config_path))
    manifest = run_pipeline(cfg)
    out = Path(cfg.output_dir)
    click.echo(f"pipeline finished: {len(manifest['artifacts'])} artifacts "
               f"under {out}")
    click.echo(f"manifest: {out / 'manifest.json'}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help and friends
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 130
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 2
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 3
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 4


if __name__ == "__main__":
    sys.exit(main())
