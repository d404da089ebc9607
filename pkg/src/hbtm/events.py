"""Event containers: raw posts, marked events, and columnar event sequences."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError
from .validation import check_node_indices, check_sorted_times

logger = logging.getLogger("hbtm.events")


@dataclass
class RawPost:
    """One ingested post, timestamp already converted to days since the epoch."""

    post_id: str
    timestamp: float
    node_id: str
    text: str
    node_attrs: dict[str, str] | None = None

    def __post_init__(self):
        if not self.node_id:
            raise DataError(f"post {self.post_id!r}: node_id must be nonempty")
        if not np.isfinite(self.timestamp) or self.timestamp < 0:
            raise DataError(
                f"post {self.post_id!r}: timestamp must be finite and >= 0, "
                f"got {self.timestamp!r}"
            )


@dataclass
class MarkedEvent:
    """A timestamped event on a node with a binary word-presence mark."""

    timestamp: float
    node_index: int
    mark: np.ndarray
    post_id: str = ""

    @property
    def n_words_on(self) -> int:
        return int(np.asarray(self.mark).sum())


@dataclass
class NodeRoster:
    """Ordered node ids with optional per-node attributes (e.g. party)."""

    ids: list[str]
    attrs: dict[str, dict[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise DataError("node roster contains duplicate ids")
        self._index = {node_id: i for i, node_id in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def index(self, node_id: str) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise DataError(f"unknown node id {node_id!r}") from None

    def attr(self, node_index: int, key: str) -> str | None:
        return self.attrs.get(self.ids[node_index], {}).get(key)

    @classmethod
    def from_posts(cls, posts) -> "NodeRoster":
        """Roster of all node ids seen in ``posts``, sorted for determinism.

        Attributes are merged first-seen-wins per node.
        """
        ids = sorted({p.node_id for p in posts})
        attrs: dict[str, dict[str, str]] = {}
        for p in posts:
            if p.node_attrs:
                merged = attrs.setdefault(p.node_id, {})
                for k, v in p.node_attrs.items():
                    merged.setdefault(k, v)
        return cls(ids=ids, attrs=attrs)


class EventSequence:
    """Time-sorted marked events stored columnwise.

    Attributes
    ----------
    times : (N,) float64, nondecreasing, days since the corpus epoch
    nodes : (N,) int64, node indices in [0, n_nodes)
    marks : (N, W) uint8 binary word-presence matrix
    post_ids : list of N opaque ids (empty strings when unknown)
    n_nodes : number of nodes in the roster (may exceed max(nodes) + 1)
    """

    def __init__(self, times, nodes, marks, n_nodes: int, post_ids=None):
        self.times = check_sorted_times(times)
        self.nodes = check_node_indices(nodes, n_nodes)
        marks = np.asarray(marks)
        if marks.ndim != 2 or marks.shape[0] != self.times.shape[0]:
            raise ValueError(
                f"marks must have shape (N, W) with N={self.times.shape[0]}, "
                f"got {marks.shape}"
            )
        if marks.size and not np.isin(marks, (0, 1)).all():
            raise DataError("marks must be binary")
        self.marks = marks.astype(np.uint8)
        if self.nodes.shape[0] != self.times.shape[0]:
            raise ValueError("times and nodes must have equal length")
        self.n_nodes = int(n_nodes)
        if post_ids is None:
            post_ids = [""] * len(self.times)
        if len(post_ids) != len(self.times):
            raise ValueError("post_ids must match the number of events")
        self.post_ids = list(post_ids)

    def __len__(self) -> int:
        return self.times.shape[0]

    def __getitem__(self, i: int) -> MarkedEvent:
        return MarkedEvent(
            timestamp=float(self.times[i]),
            node_index=int(self.nodes[i]),
            mark=self.marks[i].copy(),
            post_id=self.post_ids[i],
        )

    @property
    def n_words(self) -> int:
        return self.marks.shape[1]

    @property
    def n_events(self) -> int:
        return len(self)

    def zero_mark_indices(self) -> np.ndarray:
        """Indices of events whose mark is all-zero (kept in the model, flagged)."""
        if len(self) == 0:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.marks.sum(axis=1) == 0)

    def time_shifted(self, offset: float) -> "EventSequence":
        return EventSequence(self.times + offset, self.nodes, self.marks,
                             self.n_nodes, self.post_ids)

    @classmethod
    def from_marked_events(cls, events, n_nodes: int, n_words: int) -> "EventSequence":
        times = np.array([e.timestamp for e in events], dtype=np.float64)
        nodes = np.array([e.node_index for e in events], dtype=np.int64)
        if events:
            marks = np.stack([np.asarray(e.mark, dtype=np.uint8) for e in events])
        else:
            marks = np.zeros((0, n_words), dtype=np.uint8)
        return cls(times, nodes, marks, n_nodes, [e.post_id for e in events])
