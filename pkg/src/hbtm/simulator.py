"""Branching-process generation of synthetic marked event sequences.

Spontaneous events arrive per node as an inhomogeneous Poisson process
with the piecewise-constant background rate; every event then spawns
offspring on each node with exponentially distributed delays, and child
marks rewrite the parent mark word by word.  Ground-truth parentage is
kept so estimators can be validated against known structure.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .events import EventSequence
from .exceptions import ConfigError, NumericalError
from .model import ModelParams

logger = logging.getLogger("hbtm.simulator")

MAX_EVENTS = 2_000_000


@dataclass
class SimulatedEvent:
    """A generated event with its generative provenance.

    ``parent_index`` points into the same (time-sorted) list, or is None
    for spontaneous events; ``generation`` counts steps from the
    spontaneous root.
    """

    timestamp: float
    node_index: int
    mark: np.ndarray
    post_id: str
    parent_index: int | None
    generation: int


def branching_ratio(params, tol: float = 1e-8, max_iter: int = 100_000) -> float:
    """Spectral radius of the expected-offspring matrix via power iteration.

    Values below 1 guarantee the branching process stays finite.  The
    iteration runs on the matrix plus the identity, whose strictly
    positive diagonal removes periodicity stalls; the shift is
    subtracted from the converged eigenvalue.
    """
    theta = params.theta if isinstance(params, ModelParams) \
        else np.asarray(params, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ValueError("expected a square offspring matrix")
    if (theta < 0).any() or not np.isfinite(theta).all():
        raise ValueError("offspring matrix must be finite and nonnegative")
    s = theta.shape[0]
    shifted = theta + np.eye(s)
    v = np.full(s, 1.0 / np.sqrt(s))
    estimate = 0.0
    for _ in range(max_iter):
        w = shifted @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        w /= norm
        if abs(norm - estimate) <= tol * max(1.0, norm):
            return max(norm - 1.0, 0.0)
        estimate = norm
        v = w
    logger.warning("spectral radius estimate stopped at max_iter")
    return max(estimate - 1.0, 0.0)


def _immigrant_draws(params: ModelParams, t_end: float,
                     rng: np.random.Generator):
    """Spontaneous arrivals, drawn per node then per bin (ascending)."""
    bg = params.background
    edges = bg.t_start + bg.bin_width * np.arange(bg.n_bins)
    widths = np.clip(t_end - edges, 0.0, bg.bin_widths())
    times, nodes = [], []
    for s in range(params.n_nodes):
        for k in range(bg.n_bins):
            if widths[k] <= 0.0:
                continue
            count = rng.poisson(bg.bins[s, k] * widths[k])
            if count:
                times.append(edges[k] + widths[k] * rng.random(count))
                nodes.append(np.full(count, s, dtype=np.int64))
    if not times:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    times = np.concatenate(times)
    nodes = np.concatenate(nodes)
    order = np.argsort(times, kind="stable")
    return times[order], nodes[order]


def simulate(params: ModelParams, t_end: float | None = None,
             seed: int = 0) -> list[SimulatedEvent]:
    """Generate a time-sorted event list with ground-truth parentage.

    Draw order is fixed so a seed fully determines the output:

    1. spontaneous arrivals: per node (ascending), per background bin
       (ascending), one Poisson count then that many uniform positions;
       arrivals are then stably sorted by time;
    2. events are processed in creation order (sorted arrivals first,
       then children as they are created).  Each event consumes one
       uniform vector over the dictionary for its mark: a spontaneous
       event turns word j on iff u_j < its node's spontaneous word
       probability; a child keeps a parent's on-word unless
       u_j < p_off and gains an off-word iff u_j < p_on;
    3. each processed event then draws, per receiving node (ascending),
       one Poisson offspring count and that many exponential delays.
       Children landing past ``t_end`` (or with a zero delay) are
       discarded.

    The returned ``parent_index`` values refer to positions in the
    returned (time-sorted) list.
    """
    bg = params.background
    if t_end is None:
        t_end = bg.t_end
    if not bg.t_start < t_end <= bg.t_end:
        raise ConfigError(
            f"t_end={t_end} must lie inside the background window "
            f"({bg.t_start}, {bg.t_end}]")
    ratio = branching_ratio(params)
    if ratio >= 1.0:
        raise ConfigError(
            f"expected-offspring spectral radius {ratio:.4f} >= 1; "
            "the process would explode")

    rng = np.random.default_rng(seed)
    s_count = params.n_nodes
    w_count = params.n_words

    times_list, nodes_list = _immigrant_draws(params, t_end, rng)
    times = list(times_list)
    nodes = [int(x) for x in nodes_list]
    parents: list[int | None] = [None] * len(times)
    generations = [0] * len(times)
    marks: list[np.ndarray] = []

    head = 0
    while head < len(times):
        if len(times) > MAX_EVENTS:
            raise NumericalError(
                f"simulation exceeded {MAX_EVENTS} events; "
                "offspring load is too close to critical")
        t_e = times[head]
        s_e = nodes[head]
        u = rng.random(w_count)
        parent = parents[head]
        if parent is None:
            mark = (u < params.p_word[s_e]).astype(np.uint8)
        else:
            pmark = marks[parent]
            p_on = params.p_on[s_e, nodes[parent]]
            p_off = params.p_off[s_e, nodes[parent]]
            mark = np.where(pmark == 1, u >= p_off, u < p_on).astype(np.uint8)
        marks.append(mark)
        for s_child in range(s_count):
            count = rng.poisson(params.theta[s_child, s_e])
            if count == 0:
                continue
            delays = rng.exponential(1.0 / params.omega[s_child, s_e], count)
            for delay in delays:
                t_child = t_e + delay
                if delay <= 0.0 or t_child > t_end:
                    continue
                times.append(t_child)
                nodes.append(s_child)
                parents.append(head)
                generations.append(generations[head] + 1)
        head += 1

    order = np.argsort(np.asarray(times), kind="stable")
    position = np.empty(len(order), dtype=np.int64)
    position[order] = np.arange(len(order))
    events = []
    for rank, idx in enumerate(order):
        parent = parents[idx]
        events.append(SimulatedEvent(
            timestamp=float(times[idx]),
            node_index=nodes[idx],
            mark=marks[idx],
            post_id=f"sim-{rank:06d}",
            parent_index=None if parent is None else int(position[parent]),
            generation=generations[idx],
        ))
    return events


def as_sequence(events: list[SimulatedEvent], n_nodes: int,
                n_words: int) -> tuple[EventSequence, np.ndarray]:
    """Pack simulated events into a sequence plus a parent-index array.

    The parent array uses -1 for spontaneous events.
    """
    if not events:
        return (EventSequence([], [], np.zeros((0, n_words)), n_nodes),
                np.zeros(0, dtype=np.int64))
    seq = EventSequence(
        [e.timestamp for e in events],
        [e.node_index for e in events],
        np.stack([e.mark for e in events]),
        n_nodes,
        post_ids=[e.post_id for e in events],
    )
    parents = np.array([-1 if e.parent_index is None else e.parent_index
                        for e in events], dtype=np.int64)
    return seq, parents
