"""Config-driven end-to-end run: ingest through networks and replicas.

Stages execute sequentially: ingest posts, expand keywords and filter,
build the dictionary and marks, fit the excitation model, extract
topic clusters, aggregate the influence network, score coherence,
refit on keyword-defined sub-corpora, and simulate a replica from the
fitted parameters.  Every artifact is written atomically and hashed
into a closing manifest, so reruns with the same config and seeds are
byte-identical and interruptions leave ``.partial`` files rather than
truncated output.
"""

from __future__ import annotations

import contextlib
import json
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import corpus as corpus_mod
from .events import EventSequence, NodeRoster
from .exceptions import ConfigError, HbtmError
from .inference import FitConfig, fit
from .influence import (activity_decomposition, degree_rankings, export_graph,
                        influence_network, write_rankings_csv)
from .io import atomic_write, build_manifest, dump_json, write_events, \
    write_parents, write_roster
from .simulator import as_sequence, branching_ratio, simulate
from .topics import (coherence_report, extract_clusters, sample_forest,
                     timeline_export, write_timeline_csv)

logger = logging.getLogger("hbtm.pipeline")

SUBTOPIC_DEFAULTS = (("risk",), ("vaccine", "treatment"), ("test",))

# refitting on fewer events than this gives meaningless estimates
MIN_SUBTOPIC_EVENTS = 5

# skip the replica stage when the fitted process is near-critical
REPLICA_RADIUS_CAP = 0.98


@dataclass
class PipelineConfig:
    """Everything one end-to-end run needs, loadable from JSON.

    ``em`` is forwarded verbatim to the fitting configuration.  The two
    seeds cover the only sampled stages: forest drawing (when
    ``forest_mode`` is "sample") and the replica simulation.
    """

    input_path: str
    output_dir: str
    format: str = "jsonl"
    epoch: str = "2020-01-01"
    n_words: int = 425
    stopwords_path: str | None = None
    keyword_seeds: list = field(default_factory=list)
    ratio_min: float = 10.0
    count_min: int = 5
    max_expansion_rounds: int = 5
    em: dict = field(default_factory=dict)
    min_cluster_size: int = 11
    subtopic_min_size: int = 2
    network_threshold: float = 10.0
    subtopics: list = field(default_factory=lambda: [list(t) for t in
                                                     SUBTOPIC_DEFAULTS])
    top_words: int = 8
    forest_mode: str = "map"
    forest_seed: int = 0
    sim_seed: int = 0

    def __post_init__(self):
        if self.n_words < 2:
            raise ConfigError(f"n_words must be >= 2, got {self.n_words}")
        if self.min_cluster_size < 1 or self.subtopic_min_size < 1:
            raise ConfigError("cluster size floors must be >= 1")
        if self.network_threshold < 0:
            raise ConfigError("network_threshold must be nonnegative")
        if self.forest_mode not in ("map", "sample"):
            raise ConfigError(
                f"forest_mode must be map or sample, got {self.forest_mode!r}")
        if self.top_words < 2:
            raise ConfigError("top_words must be >= 2")
        for group in self.subtopics:
            if not group:
                raise ConfigError("subtopic keyword lists must be nonempty")
        # validate eagerly so bad fitting settings fail before any stage
        self.fit_config()

    def fit_config(self) -> FitConfig:
        return FitConfig.from_dict(dict(self.em))

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        missing = [name for name in ("input_path", "output_dir")
                   if name not in d]
        if missing:
            raise ConfigError(f"missing config key {missing[0]!r}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON in config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        return cls.from_dict(doc)


@contextlib.contextmanager
def _stage(name: str):
    logger.info("stage %s", name)
    try:
        yield
    except HbtmError as exc:
        raise type(exc)(f"[stage {name}] {exc}") from None
    except Exception as exc:
        raise RuntimeError(f"[stage {name}] {type(exc).__name__}: {exc}") \
            from exc


class _Artifacts:
    """Tracks every completed file so the manifest cannot miss one."""

    def __init__(self, root: Path):
        self.root = root
        self.paths: list[Path] = []

    def path(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(p)
        return p

    def write_json(self, relpath, obj):
        with atomic_write(self.path(relpath)) as fh:
            fh.write(dump_json(obj))

    def write_replaced(self, relpath, writer):
        """Route writers that take a path through the .partial protocol."""
        final = self.path(relpath)
        tmp = final.with_name(final.name + ".partial")
        writer(tmp)
        os.replace(tmp, final)


def _fit_artifacts(arts, prefix, events, fit_cfg):
    report = fit(events, fit_cfg)
    params = report.final_params
    arts.write_replaced(prefix + "params.json",
                        lambda p: params.save(p))
    arts.write_json(prefix + "trace.json", {
        "iterations": report.iterations,
        "converged": report.converged,
        "restarts_used": report.restarts_used,
        "log_likelihood_trace": [float(v)
                                 for v in report.log_likelihood_trace],
    })
    arts.write_replaced(prefix + "branching.jsonl",
                        lambda p: report.branching.to_jsonl(p))
    return report


def _topic_artifacts(arts, prefix, report, events, dictionary, attr_list,
                     documents, cfg, min_size):
    forest = sample_forest(report.branching, mode=cfg.forest_mode,
                           seed=cfg.forest_seed)
    arts.write_json(prefix + "forest.json",
                    {"parents": forest.parents.tolist()})
    clusters = extract_clusters(forest, events, min_size=min_size,
                                dictionary=dictionary, node_attrs=attr_list,
                                top_k=cfg.top_words)
    arts.write_json(prefix + "clusters.json", [c.to_dict() for c in clusters])
    arts.write_replaced(prefix + "timeline.csv",
                        lambda p: write_timeline_csv(timeline_export(clusters),
                                                     p))
    coh = coherence_report(clusters, documents)
    arts.write_json(prefix + "coherence.json", coh.to_dict())
    return clusters, coh


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute every stage; returns the artifact manifest."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arts = _Artifacts(out_dir)
    summary: dict = {}

    if not Path(config.input_path).exists():
        raise ConfigError(f"input file not found: {config.input_path}")
    stopwords = frozenset()
    if config.stopwords_path is not None:
        if not Path(config.stopwords_path).exists():
            raise ConfigError(
                f"stopword file not found: {config.stopwords_path}")
        stopwords = corpus_mod.load_stopwords(config.stopwords_path)
    fit_cfg = config.fit_config()

    with _stage("ingest"):
        posts = corpus_mod.ingest_posts(config.input_path, config.epoch,
                                        format=config.format)
        roster = NodeRoster.from_posts(posts)
        write_roster(arts.path("roster.json"), roster)
        summary["ingest"] = {"n_posts": len(posts), "n_nodes": len(roster)}

    with _stage("expand"):
        if config.keyword_seeds:
            expansion = corpus_mod.expand_keywords(
                posts, config.keyword_seeds, ratio_min=config.ratio_min,
                count_min=config.count_min,
                max_iter=config.max_expansion_rounds, stopwords=stopwords)
            posts = corpus_mod.filter_by_keywords(posts, expansion.keywords,
                                                  stopwords)
            expansion_doc = {
                "seeds": sorted(expansion.seeds),
                "keywords": sorted(expansion.keywords),
                "added_per_round": [sorted(s)
                                    for s in expansion.added_per_round],
                "converged": expansion.converged,
                "no_seed_matches": expansion.warning,
                "n_posts_kept": len(posts),
            }
        else:
            expansion_doc = {"seeds": [], "keywords": [],
                             "added_per_round": [], "converged": True,
                             "no_seed_matches": False,
                             "n_posts_kept": len(posts)}
        arts.write_json("expansion.json", expansion_doc)
        summary["expand"] = {"n_keywords": len(expansion_doc["keywords"]),
                             "n_posts_kept": len(posts)}
        if not posts:
            raise ConfigError("keyword filtering removed every post")

    with _stage("marks"):
        dictionary = corpus_mod.build_dictionary(posts, stopwords=stopwords,
                                                 n_words=config.n_words)
        arts.write_replaced("dictionary.txt", lambda p: dictionary.save(p))
        marked = corpus_mod.to_marked_events(posts, dictionary, roster,
                                             stopwords=stopwords)
        events = EventSequence.from_marked_events(marked, len(roster),
                                                  dictionary.n_words)
        write_events(arts.path("events.jsonl"), events)
        summary["marks"] = {"n_events": events.n_events,
                            "n_words": len(dictionary)}

    with _stage("fit"):
        report = _fit_artifacts(arts, "", events, fit_cfg)
        summary["fit"] = {"iterations": report.iterations,
                          "converged": report.converged,
                          "final_objective":
                              float(report.log_likelihood_trace[-1])}

    attr_list = [roster.attr(i, "party") for i in range(len(roster))]
    documents = [frozenset(corpus_mod.tokenize(p.text, stopwords))
                 for p in posts]

    with _stage("topics"):
        clusters, coh = _topic_artifacts(
            arts, "", report, events, dictionary, attr_list, documents,
            config, config.min_cluster_size)
        summary["topics"] = {"n_clusters": len(clusters),
                             "mean_coherence": coh.mean_of_clusters}

    with _stage("network"):
        attrs_by_index = [roster.attrs.get(node_id, {})
                          for node_id in roster.ids]
        net = influence_network(report.branching, events,
                                threshold=config.network_threshold,
                                node_ids=roster.ids,
                                node_attrs=attrs_by_index)
        arts.write_json("network.json", net.to_dict())
        with atomic_write(arts.path("network.dot")) as fh:
            fh.write(export_graph(net, format="dot"))
        with atomic_write(arts.path("edges.csv")) as fh:
            fh.write(export_graph(net, format="csv"))
        arts.write_replaced("rankings.csv",
                            lambda p: write_rankings_csv(net, p))
        activity = activity_decomposition(report.branching, events,
                                          params=report.final_params,
                                          node_ids=roster.ids)
        arts.write_json("activity.json", [a.to_dict() for a in activity])
        rankings = degree_rankings(net, k=min(10, len(roster)))
        summary["network"] = {"n_edges": len(net.edges()),
                              "top_in": rankings["in"][:3],
                              "top_out": rankings["out"][:3]}

    with _stage("subtopics"):
        summary["subtopics"] = _run_subtopics(arts, config, posts, roster,
                                              dictionary, attr_list, fit_cfg,
                                              stopwords)

    with _stage("replica"):
        radius = branching_ratio(report.final_params.theta)
        if radius < REPLICA_RADIUS_CAP:
            sim = simulate(report.final_params, seed=config.sim_seed)
            replica, parents = as_sequence(sim, events.n_nodes,
                                           events.n_words)
            write_events(arts.path("replica_events.jsonl"), replica)
            write_parents(arts.path("replica_truth.jsonl"), parents)
            summary["replica"] = {"n_events": replica.n_events,
                                  "spectral_radius": radius}
        else:
            summary["replica"] = {"skipped": True,
                                  "spectral_radius": radius}
            logger.warning(
                "replica skipped: fitted spectral radius %.3f is "
                "near-critical", radius)

    arts.write_json("summary.json", summary)
    manifest = build_manifest(arts.paths, out_dir)
    with atomic_write(out_dir / "manifest.json") as fh:
        fh.write(dump_json(manifest))
    return manifest


def _run_subtopics(arts, config, posts, roster, dictionary, attr_list,
                   fit_cfg, stopwords):
    notes = []
    for group in config.subtopics:
        name = "-".join(group)
        prefix = f"subtopics/{name}/"
        sub_posts = corpus_mod.filter_by_keywords(posts, set(group),
                                                  stopwords)
        note = {"name": name, "keywords": list(group),
                "n_posts": len(sub_posts)}
        if len(sub_posts) < MIN_SUBTOPIC_EVENTS:
            note["skipped"] = "too few matching posts"
            arts.write_json(prefix + "note.json", note)
            notes.append(note)
            continue
        seen = set()
        for p in sub_posts:
            seen.update(corpus_mod.tokenize(p.text, stopwords))
        # keep the full-run word order so labels stay comparable
        sub_words = [w for w in dictionary.words if w in seen]
        sub_dict = corpus_mod.Dictionary(sub_words)
        arts.write_replaced(prefix + "dictionary.txt",
                            lambda p: sub_dict.save(p))
        sub_marked = corpus_mod.to_marked_events(sub_posts, sub_dict, roster,
                                                 stopwords=stopwords)
        sub_events = EventSequence.from_marked_events(sub_marked, len(roster),
                                                      sub_dict.n_words)
        report = _fit_artifacts(arts, prefix, sub_events, fit_cfg)
        documents = [frozenset(corpus_mod.tokenize(p.text, stopwords))
                     for p in sub_posts]
        clusters, coh = _topic_artifacts(
            arts, prefix, report, sub_events, sub_dict, attr_list, documents,
            config, config.subtopic_min_size)
        note["n_events"] = sub_events.n_events
        note["n_clusters"] = len(clusters)
        note["mean_coherence"] = coh.mean_of_clusters
        notes.append(note)
    return notes
