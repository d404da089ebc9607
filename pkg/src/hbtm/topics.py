"""Topic clusters from parent attributions, plus coherence scoring.

A parent assignment turns the event set into a forest; each tree is a
topic cluster.  Clusters get summarized (time span, frequent words,
dominant node and attribute) for timeline-style reporting, and word
lists can be scored with a document-co-occurrence coherence measure.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .events import EventSequence
from .inference import BranchingMatrix

logger = logging.getLogger("hbtm.topics")

TOP_WORDS_DEFAULT = 8


@dataclass
class BranchingForest:
    """One parent per event (-1 for spontaneous roots).

    Parents always precede their children in event order, so the
    structure is acyclic by construction.
    """

    parents: np.ndarray

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=np.int64)
        if self.parents.ndim != 1:
            raise ValueError("parents must be a flat array")
        idx = np.arange(len(self.parents))
        bad = (self.parents >= idx) | (self.parents < -1)
        if bad.any():
            raise ValueError(
                f"event {int(np.flatnonzero(bad)[0])} has an invalid parent")

    def __len__(self) -> int:
        return len(self.parents)

    def parent(self, i: int) -> int | None:
        p = int(self.parents[i])
        return None if p < 0 else p

    def roots(self) -> np.ndarray:
        """Root event of each tree, resolved in one forward pass."""
        out = np.arange(len(self.parents))
        for i, p in enumerate(self.parents):
            if p >= 0:
                out[i] = out[p]
        return out


def sample_forest(q: BranchingMatrix, mode: str = "map",
                  seed: int = 0) -> BranchingForest:
    """Choose one parent per event from its attribution row.

    "map" takes the row argmax, resolving ties toward the earliest
    candidate (the self entry sits last, so a tie between a parent and
    spontaneity keeps the parent).  "sample" draws from the row as a
    categorical distribution, consuming exactly one uniform per event
    in event order.
    """
    if mode not in ("sample", "map"):
        raise ValueError(f"mode must be 'sample' or 'map', got {mode!r}")
    q.validate()
    n = len(q)
    parents = np.empty(n, dtype=np.int64)
    if mode == "map":
        for i in range(n):
            cols, vals = q.row(i)
            parents[i] = cols[int(np.argmax(vals))]
    else:
        rng = np.random.default_rng(seed)
        draws = rng.random(n)
        for i in range(n):
            cols, vals = q.row(i)
            cum = np.cumsum(vals)
            k = int(np.searchsorted(cum, draws[i] * cum[-1], side="right"))
            parents[i] = cols[min(k, len(cols) - 1)]
    parents[parents == np.arange(n)] = -1
    return BranchingForest(parents)


@dataclass
class TopicCluster:
    """A tree of the branching forest with reporting summaries."""

    event_indices: list[int]
    start_t: float
    end_t: float
    size: int
    top_words: list[tuple[str, int]]
    dominant_node: int
    dominant_attr: str | None = None

    @property
    def midpoint_t(self) -> float:
        return 0.5 * (self.start_t + self.end_t)

    def to_dict(self) -> dict:
        return {
            "event_indices": [int(i) for i in self.event_indices],
            "start_t": self.start_t,
            "end_t": self.end_t,
            "size": self.size,
            "top_words": [[w, int(c)] for w, c in self.top_words],
            "dominant_node": int(self.dominant_node),
            "dominant_attr": self.dominant_attr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TopicCluster":
        return cls(
            event_indices=list(d["event_indices"]),
            start_t=float(d["start_t"]),
            end_t=float(d["end_t"]),
            size=int(d["size"]),
            top_words=[(w, int(c)) for w, c in d["top_words"]],
            dominant_node=int(d["dominant_node"]),
            dominant_attr=d.get("dominant_attr"),
        )


def _modal(values, tie_key):
    counts = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return min(counts, key=lambda v: (-counts[v], tie_key(v)))


def extract_clusters(forest: BranchingForest, events: EventSequence,
                     min_size: int = 1, dictionary=None,
                     node_attrs=None, top_k: int = TOP_WORDS_DEFAULT
                     ) -> list[TopicCluster]:
    """Group events by their tree and summarize each group.

    Trees smaller than ``min_size`` are dropped.  Frequent words are
    ranked by within-cluster document frequency (word-index ties go to
    the earlier dictionary position); the dominant node is the modal
    member node (ties to the smaller index); ``node_attrs`` may map
    node index to a label (e.g. a party) to get a dominant attribute.
    Clusters come back ordered by start time, then first event index.
    """
    if len(forest) != len(events):
        raise ValueError("forest and events disagree on the event count")
    roots = forest.roots()
    members: dict[int, list[int]] = {}
    for i, r in enumerate(roots):
        members.setdefault(int(r), []).append(i)

    clusters = []
    for root in sorted(members):
        idx = members[root]
        if len(idx) < min_size:
            continue
        times = events.times[idx]
        df = events.marks[idx].sum(axis=0)
        order = np.lexsort((np.arange(len(df)), -df))
        top = [(dictionary.words[w] if dictionary is not None else str(w),
                int(df[w]))
               for w in order[:top_k] if df[w] > 0]
        nodes = [int(events.nodes[i]) for i in idx]
        dominant = _modal(nodes, tie_key=lambda v: v)
        attr = None
        if node_attrs is not None:
            labels = [node_attrs[n] for n in nodes
                      if node_attrs[n] is not None]
            if labels:
                attr = _modal(labels, tie_key=str)
        clusters.append(TopicCluster(
            event_indices=idx,
            start_t=float(times.min()),
            end_t=float(times.max()),
            size=len(idx),
            top_words=top,
            dominant_node=dominant,
            dominant_attr=attr,
        ))
    clusters.sort(key=lambda c: (c.start_t, c.event_indices[0]))
    return clusters


def _word_list(top_words) -> list[str]:
    return [w[0] if isinstance(w, (tuple, list)) else w for w in top_words]


def uci_coherence(top_words, documents, eps: float = 1.0) -> float:
    """Mean log co-occurrence lift over unordered word pairs.

    Each pair contributes log[(D(a,b) + eps) * D / (D(a) * D(b))] with
    document-level counts.  Words absent from every document are
    smoothed with a unit denominator and logged, since their score
    carries no evidence.
    """
    words = _word_list(top_words)
    if len(words) < 2:
        raise ValueError("coherence needs at least two words")
    if not documents:
        raise ValueError("coherence needs at least one document")
    docs = [set(d) for d in documents]
    n_docs = len(docs)
    df = {w: sum(1 for d in docs if w in d) for w in set(words)}
    missing = sorted(w for w, c in df.items() if c == 0)
    if missing:
        logger.warning("words never seen in any document: %s", missing)
    total = 0.0
    pairs = 0
    for a_i in range(len(words)):
        for b_i in range(a_i + 1, len(words)):
            a, b = words[a_i], words[b_i]
            both = sum(1 for d in docs if a in d and b in d)
            total += math.log((both + eps) * n_docs
                              / (max(df[a], 1) * max(df[b], 1)))
            pairs += 1
    return total / pairs


@dataclass
class CoherenceReport:
    """Coherence of every cluster plus the two aggregate readings."""

    per_cluster: list[float]
    mean_of_clusters: float
    pooled_pairs: float
    skipped: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_cluster": self.per_cluster,
            "mean_of_clusters": self.mean_of_clusters,
            "pooled_pairs": self.pooled_pairs,
            "skipped": self.skipped,
        }


def coherence_report(clusters, documents, eps: float = 1.0) -> CoherenceReport:
    """Score each cluster's word list; aggregate per-cluster and pooled.

    Clusters with fewer than two frequent words cannot be scored and
    are recorded as skipped.  The pooled figure averages over all
    within-cluster word pairs at once, weighting big clusters more.
    """
    per = []
    skipped = []
    pair_sum = 0.0
    pair_count = 0
    for k, cluster in enumerate(clusters):
        words = _word_list(cluster.top_words)
        if len(words) < 2:
            skipped.append(k)
            continue
        score = uci_coherence(words, documents, eps)
        per.append(score)
        n_pairs = len(words) * (len(words) - 1) // 2
        pair_sum += score * n_pairs
        pair_count += n_pairs
    mean = float(np.mean(per)) if per else float("nan")
    pooled = pair_sum / pair_count if pair_count else float("nan")
    return CoherenceReport(per, mean, pooled, skipped)


def timeline_export(clusters) -> list[dict]:
    """Flat plot-ready records, one per cluster, sorted by midpoint."""
    records = [{
        "midpoint_t": c.midpoint_t,
        "size": c.size,
        "words": [w for w, _ in c.top_words],
        "dominant_node": int(c.dominant_node),
        "dominant_attr": c.dominant_attr,
    } for c in clusters]
    records.sort(key=lambda r: r["midpoint_t"])
    return records


def write_timeline_csv(records, path):
    """Timeline CSV with a fixed header; words are semicolon-joined."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["midpoint_t", "size", "words", "dominant_node",
                         "dominant_attr"])
        for r in records:
            writer.writerow([
                repr(float(r["midpoint_t"])),
                r["size"],
                ";".join(r["words"]),
                r["dominant_node"],
                "" if r["dominant_attr"] is None else r["dominant_attr"],
            ])
