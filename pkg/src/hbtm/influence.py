"""Directed influence networks and activity decomposition from attributions.

Summing each event's parent attributions over node pairs yields the
expected number of events one node triggered at another.  Those sums
form a weighted directed graph, feed in/out-degree rankings, and split
every node's activity into a spontaneous part and a triggering part.
The weights capture temporal predictability only: they say nothing
about outside drivers that may excite several nodes at once, so they
must not be read as controlled causal effects.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass

import numpy as np

from .events import EventSequence
from .exceptions import DataError
from .inference import BranchingMatrix
from .model import ModelParams

logger = logging.getLogger("hbtm.influence")

THRESHOLD_DEFAULT = 10.0

# DOT colors keyed by a node's "party" attribute
_PARTY_COLORS = {"D": "blue", "R": "red"}


@dataclass
class InfluenceNetwork:
    """Weighted directed graph of expected triggered-event counts.

    ``weights[source, target]`` is the attributed mass of events at
    ``target`` whose parent sat at ``source``; self-excitation stays on
    the diagonal.  ``threshold`` only controls the pruned edge view;
    the full matrix is always retained.  ``events_per_node`` enables
    the per-target normalized reading of the same weights.
    """

    weights: np.ndarray
    threshold: float
    node_ids: list[str]
    node_attrs: list[dict]
    events_per_node: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        s = len(self.node_ids)
        if self.weights.shape != (s, s):
            raise ValueError("weights must be square over the node roster")
        if (self.weights < 0).any():
            raise ValueError("edge weights must be nonnegative")
        self.events_per_node = np.asarray(self.events_per_node,
                                          dtype=np.int64)
        if self.events_per_node.shape != (s,):
            raise ValueError("events_per_node must have one entry per node")
        if len(self.node_attrs) != s:
            raise ValueError("node_attrs must have one entry per node")

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def edges(self, include_self: bool = True):
        """Pruned view: (source, target, weight) with weight >= threshold."""
        out = []
        for s in range(self.n_nodes):
            for t in range(self.n_nodes):
                if s == t and not include_self:
                    continue
                w = float(self.weights[s, t])
                if w >= self.threshold:
                    out.append((s, t, w))
        return out

    def normalized_weights(self) -> np.ndarray:
        """Weights divided by the target node's event count.

        Entry (s, t) then reads as the fraction of t's events triggered
        by s.  Targets with no events give zero rows.
        """
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.weights / self.events_per_node[None, :]
        return np.where(self.events_per_node[None, :] > 0, out, 0.0)

    def to_dict(self) -> dict:
        return {
            "node_ids": list(self.node_ids),
            "node_attrs": [dict(a) for a in self.node_attrs],
            "threshold": self.threshold,
            "events_per_node": self.events_per_node.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InfluenceNetwork":
        required = {"node_ids", "node_attrs", "threshold", "events_per_node",
                    "weights"}
        missing = required - d.keys()
        if missing:
            raise DataError(f"network document missing keys: {sorted(missing)}")
        return cls(d["weights"], d["threshold"], list(d["node_ids"]),
                   [dict(a) for a in d["node_attrs"]], d["events_per_node"])


def influence_network(q: BranchingMatrix, events: EventSequence,
                      threshold: float = THRESHOLD_DEFAULT,
                      node_ids=None, node_attrs=None) -> InfluenceNetwork:
    """Aggregate parent attributions into node-pair edge weights."""
    s = events.n_nodes
    child, parent, weight = q.off_diagonal()
    weights = np.zeros((s, s))
    # weights[source, target]: parents are sources
    np.add.at(weights, (events.nodes[parent], events.nodes[child]), weight)
    if node_ids is None:
        node_ids = [str(i) for i in range(s)]
    if node_attrs is None:
        node_attrs = [{} for _ in range(s)]
    return InfluenceNetwork(
        weights=weights,
        threshold=threshold,
        node_ids=list(node_ids),
        node_attrs=node_attrs,
        events_per_node=np.bincount(events.nodes, minlength=s),
    )


def degree_rankings(network: InfluenceNetwork, k: int):
    """Top-k nodes by in-degree and out-degree over the full matrix.

    Self-excitation is excluded; ties break toward the smaller node
    index.  Returns ``{"in": [(node_id, value), ...], "out": [...]}``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    w = network.weights.copy()
    np.fill_diagonal(w, 0.0)
    in_degree = w.sum(axis=0)
    out_degree = w.sum(axis=1)

    def top(values):
        order = np.lexsort((np.arange(len(values)), -values))
        return [(network.node_ids[i], float(values[i])) for i in order[:k]]

    return {"in": top(in_degree), "out": top(out_degree)}


@dataclass
class NodeActivity:
    """Spontaneous-vs-triggering split of one node's activity.

    ``spontaneous_mass`` is the attributed count of its spontaneous
    events; ``triggering_influence`` is the expected number of direct
    children per event it posts, measured from the attributions (the
    window-free model-parameter reading is ``theta_influence``).
    Shares are normalized across nodes and sum to one when any mass
    exists.
    """

    node: int
    node_id: str
    spontaneous_mass: float
    triggering_influence: float
    spontaneous_share: float
    triggering_share: float
    theta_influence: float | None = None

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "node_id": self.node_id,
            "spontaneous_mass": self.spontaneous_mass,
            "triggering_influence": self.triggering_influence,
            "spontaneous_share": self.spontaneous_share,
            "triggering_share": self.triggering_share,
            "theta_influence": self.theta_influence,
        }


def activity_decomposition(q: BranchingMatrix, events: EventSequence,
                           params: ModelParams | None = None,
                           node_ids=None) -> list[NodeActivity]:
    """Per-node spontaneous mass and mean direct offspring per event."""
    s = events.n_nodes
    counts = np.bincount(events.nodes, minlength=s).astype(np.float64)
    spont = np.bincount(events.nodes, weights=q.spontaneous(), minlength=s)

    child, parent, weight = q.off_diagonal()
    triggered_mass = np.bincount(events.nodes[parent], weights=weight,
                                 minlength=s)
    with np.errstate(invalid="ignore"):
        influence = triggered_mass / counts
    influence = np.where(counts > 0, influence, 0.0)

    def shares(values):
        total = values.sum()
        return values / total if total > 0 else np.zeros_like(values)

    spont_share = shares(spont)
    trig_share = shares(influence)
    theta_col = params.theta.sum(axis=0) if params is not None else None
    if node_ids is None:
        node_ids = [str(i) for i in range(s)]
    return [NodeActivity(
        node=i,
        node_id=node_ids[i],
        spontaneous_mass=float(spont[i]),
        triggering_influence=float(influence[i]),
        spontaneous_share=float(spont_share[i]),
        triggering_share=float(trig_share[i]),
        theta_influence=None if theta_col is None else float(theta_col[i]),
    ) for i in range(s)]


def _dot_quote(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_graph(network: InfluenceNetwork, format: str = "dot") -> str:
    """Render the pruned edge view as DOT, JSON, or a CSV edge list.

    The JSON form carries the full matrix and reconstructs the network
    exactly; DOT colors nodes blue/red from a D/R "party" attribute.
    """
    if format == "json":
        return json.dumps(network.to_dict(), indent=1)
    edges = network.edges(include_self=True)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["source", "target", "weight"])
        for s, t, w in edges:
            writer.writerow([network.node_ids[s], network.node_ids[t],
                             f"{w:.6f}"])
        return buf.getvalue()
    if format == "dot":
        lines = ["digraph influence {"]
        for i, node_id in enumerate(network.node_ids):
            color = _PARTY_COLORS.get(network.node_attrs[i].get("party"))
            style = f' [color={color}]' if color else ""
            lines.append(f"  {_dot_quote(node_id)}{style};")
        for s, t, w in edges:
            lines.append(
                f"  {_dot_quote(network.node_ids[s])} -> "
                f"{_dot_quote(network.node_ids[t])} [label=\"{w:.2f}\"];")
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"format must be dot, json, or csv, got {format!r}")


def network_from_json(text: str) -> InfluenceNetwork:
    return InfluenceNetwork.from_dict(json.loads(text))


def write_rankings_csv(network: InfluenceNetwork, path):
    """All nodes ranked by out-degree (most influential first)."""
    w = network.weights.copy()
    np.fill_diagonal(w, 0.0)
    in_degree = w.sum(axis=0)
    out_degree = w.sum(axis=1)
    order = np.lexsort((np.arange(network.n_nodes), -out_degree))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "node", "in_degree", "out_degree"])
        for rank, i in enumerate(order, start=1):
            writer.writerow([rank, network.node_ids[i],
                             f"{in_degree[i]:.6f}", f"{out_degree[i]:.6f}"])
