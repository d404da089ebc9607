"""Model parameters and the marked-intensity / likelihood evaluations.

The process on each node mixes a time-varying spontaneous rate with
exponential-kernel excitation from earlier events on all nodes.  Word
marks enter through two normalized Bernoulli product masses: a
per-node mass for spontaneous events and a parent-conditional
transmission mass for triggered events.  All mark masses are handled
in log space; with dictionaries of several hundred words the raw
products underflow double precision.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .events import EventSequence
from .exceptions import DataError
from .validation import check_mark, check_square_matrix

logger = logging.getLogger("hbtm.model")

# Legal parameter ranges; estimation clips into these.
PROB_EPS = 1e-6
OMEGA_MIN = 1e-3
OMEGA_MAX = 1e3


@dataclass
class OverlapCounts:
    """Word-presence overlap between a child mark and a parent mark.

    gained: on in the child, off in the parent
    absent: off in both
    lost:   on in the parent, off in the child
    kept:   on in both

    The four counts always sum to the dictionary size.
    """

    gained: int
    absent: int
    lost: int
    kept: int

    @property
    def total(self) -> int:
        return self.gained + self.absent + self.lost + self.kept


def mark_overlap(child_mark, parent_mark) -> OverlapCounts:
    """Count the four on/off overlap categories of two equal-length marks."""
    child = check_mark(child_mark)
    parent = check_mark(parent_mark)
    if child.shape != parent.shape:
        raise ValueError(
            f"mark length mismatch: child {child.shape[0]}, parent {parent.shape[0]}"
        )
    kept = int(np.sum((child == 1) & (parent == 1)))
    gained = int(child.sum()) - kept
    lost = int(parent.sum()) - kept
    absent = child.shape[0] - gained - lost - kept
    return OverlapCounts(gained=gained, absent=absent, lost=lost, kept=kept)


def spontaneous_mark_log_mass(mark, p_word: float) -> float:
    """Log-mass of a spontaneous mark: each word on independently with ``p_word``.

    Exponentiating and summing over the full binary mark space gives 1.
    """
    mark = check_mark(mark)
    if not 0.0 < p_word < 1.0:
        raise ValueError(f"p_word must lie strictly inside (0, 1), got {p_word!r}")
    n_on = int(mark.sum())
    n_off = mark.shape[0] - n_on
    return n_on * math.log(p_word) + n_off * math.log1p(-p_word)


def triggered_mark_log_mass(child_mark, parent_mark,
                            p_on: float, p_off: float) -> float:
    """Log-mass of a child mark given its parent's mark.

    Words absent in the parent turn on with probability ``p_on``; words
    present in the parent are dropped with probability ``p_off``.  Also
    normalized over the mark space for any fixed parent.
    """
    if not 0.0 < p_on < 1.0:
        raise ValueError(f"p_on must lie strictly inside (0, 1), got {p_on!r}")
    if not 0.0 < p_off < 1.0:
        raise ValueError(f"p_off must lie strictly inside (0, 1), got {p_off!r}")
    ov = mark_overlap(child_mark, parent_mark)
    return (ov.gained * math.log(p_on) + ov.absent * math.log1p(-p_on)
            + ov.lost * math.log(p_off) + ov.kept * math.log1p(-p_off))


class BackgroundRate:
    """Piecewise-constant per-node spontaneous rate on a fixed window.

    ``bins[s, k]`` is the rate (events per day) of node ``s`` on the
    k-th bin.  Bins have width ``bin_width`` except that the final bin
    is shortened when the window span is not an exact multiple.  The
    rate is zero outside ``[t_start, t_end]``.
    """

    def __init__(self, bins, bin_width: float, t_start: float, t_end: float):
        bins = np.asarray(bins, dtype=np.float64)
        if bins.ndim != 2:
            raise ValueError(f"bins must be 2-d (nodes x bins), got shape {bins.shape}")
        if not np.isfinite(bins).all() or (bins < 0).any():
            raise ValueError("background bins must be finite and nonnegative")
        if not bin_width > 0:
            raise ValueError(f"bin_width must be positive, got {bin_width!r}")
        span = float(t_end) - float(t_start)
        if span <= 0:
            raise ValueError(f"empty background window [{t_start}, {t_end}]")
        expected = n_bins_for(span, bin_width)
        if bins.shape[1] != expected:
            raise ValueError(
                f"{bins.shape[1]} bins do not cover [{t_start}, {t_end}] "
                f"at width {bin_width} (expected {expected})"
            )
        self.bins = bins
        self.bin_width = float(bin_width)
        self.t_start = float(t_start)
        self.t_end = float(t_end)

    @property
    def n_nodes(self) -> int:
        return self.bins.shape[0]

    @property
    def n_bins(self) -> int:
        return self.bins.shape[1]

    def bin_widths(self) -> np.ndarray:
        """Actual bin widths; only the last may be shorter than ``bin_width``."""
        widths = np.full(self.n_bins, self.bin_width)
        widths[-1] = self.t_end - (self.t_start + (self.n_bins - 1) * self.bin_width)
        return widths

    def bin_index(self, times) -> np.ndarray:
        """Bin index per time; times must lie inside the window."""
        t = np.atleast_1d(np.asarray(times, dtype=np.float64))
        idx = np.floor((t - self.t_start) / self.bin_width).astype(np.int64)
        return np.clip(idx, 0, self.n_bins - 1)

    def rate_at(self, nodes, times) -> np.ndarray:
        """Vectorized rate lookup; zero outside the window."""
        nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
        t = np.atleast_1d(np.asarray(times, dtype=np.float64))
        inside = (t >= self.t_start) & (t <= self.t_end)
        out = np.zeros(np.broadcast(nodes, t).shape)
        if inside.any():
            idx = self.bin_index(np.where(inside, t, self.t_start))
            vals = self.bins[nodes, idx]
            out = np.where(inside, vals, 0.0)
        return out

    def rate(self, node: int, t: float) -> float:
        return float(self.rate_at(node, t)[0])

    def integral(self, upto: float | None = None) -> np.ndarray:
        """Per-node integral of the rate over [t_start, min(upto, t_end)]."""
        stop = self.t_end if upto is None else min(float(upto), self.t_end)
        if stop <= self.t_start:
            return np.zeros(self.n_nodes)
        edges = self.t_start + self.bin_width * np.arange(self.n_bins + 1)
        edges[-1] = self.t_end
        covered = np.clip(stop - edges[:-1], 0.0, np.diff(edges))
        return self.bins @ covered

    def total_mass(self, upto: float | None = None) -> float:
        return float(self.integral(upto).sum())


def n_bins_for(span: float, bin_width: float) -> int:
    """Number of bins of ``bin_width`` covering a window of length ``span``."""
    k = int(math.ceil(span / bin_width - 1e-9))
    return max(k, 1)


class ModelParams:
    """All parameters of the fitted process.

    Attributes
    ----------
    n_nodes, n_words : dimensions S and W
    background : BackgroundRate over the observation window
    p_word : (S,) spontaneous word-on probability per node
    theta : (S, S) expected offspring at row-node per event at column-node
    omega : (S, S) inverse expected parent-child delay, per day
    p_on, p_off : (S, S) word switch-on / switch-off probabilities,
        row = child node, column = parent node
    """

    def __init__(self, background: BackgroundRate, p_word, theta, omega,
                 p_on, p_off, n_words: int):
        s = background.n_nodes
        self.background = background
        self.n_nodes = s
        self.n_words = int(n_words)
        if self.n_words < 1:
            raise ValueError("n_words must be >= 1")
        p_word = np.asarray(p_word, dtype=np.float64)
        if p_word.shape != (s,):
            raise ValueError(f"p_word must have shape ({s},), got {p_word.shape}")
        self.p_word = p_word
        self.theta = check_square_matrix(theta, s, "theta", nonneg=True)
        self.omega = check_square_matrix(omega, s, "omega")
        self.p_on = check_square_matrix(p_on, s, "p_on")
        self.p_off = check_square_matrix(p_off, s, "p_off")
        self._validate_ranges()

    def _validate_ranges(self):
        tol = 1e-12
        for name, arr in (("p_word", self.p_word), ("p_on", self.p_on),
                          ("p_off", self.p_off)):
            if (arr < PROB_EPS - tol).any() or (arr > 1.0 - PROB_EPS + tol).any():
                raise ValueError(
                    f"{name} must lie within [{PROB_EPS}, {1.0 - PROB_EPS}]"
                )
        if (self.omega < OMEGA_MIN - tol).any() or (self.omega > OMEGA_MAX + tol).any():
            raise ValueError(f"omega must lie within [{OMEGA_MIN}, {OMEGA_MAX}]")

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        bg = self.background
        return {
            "n_nodes": self.n_nodes,
            "n_words": self.n_words,
            "bin_width": bg.bin_width,
            "t_start": bg.t_start,
            "t_end": bg.t_end,
            "background_bins": bg.bins.tolist(),
            "p_word": self.p_word.tolist(),
            "theta": self.theta.tolist(),
            "omega": self.omega.tolist(),
            "p_on": self.p_on.tolist(),
            "p_off": self.p_off.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        required = {"n_nodes", "n_words", "bin_width", "t_start", "t_end",
                    "background_bins", "p_word", "theta", "omega", "p_on", "p_off"}
        missing = required - d.keys()
        if missing:
            raise DataError(f"params document missing keys: {sorted(missing)}")
        bg = BackgroundRate(d["background_bins"], d["bin_width"],
                            d["t_start"], d["t_end"])
        if bg.n_nodes != d["n_nodes"]:
            raise DataError("background_bins row count disagrees with n_nodes")
        return cls(bg, d["p_word"], d["theta"], d["omega"], d["p_on"],
                   d["p_off"], d["n_words"])

    def to_json(self) -> str:
        # json float formatting uses repr, which round-trips float64 exactly
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ModelParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _history_arrays(history):
    if isinstance(history, EventSequence):
        return history.times, history.nodes, history.marks
    times = np.array([e.timestamp for e in history], dtype=np.float64)
    nodes = np.array([e.node_index for e in history], dtype=np.int64)
    marks = (np.stack([np.asarray(e.mark, np.uint8) for e in history])
             if len(history) else np.zeros((0, 0), np.uint8))
    return times, nodes, marks


def intensity(params: ModelParams, history, t: float, mark, node: int) -> float:
    """Marked intensity at ``(t, mark)`` on ``node`` given the strict past.

    Spontaneous rate times the spontaneous mark mass, plus one
    exponentially decayed excitation term per history event weighted by
    the mark-transmission mass.
    """
    bg = params.background
    if not bg.t_start <= t <= bg.t_end:
        raise ValueError(
            f"t={t} outside the background window [{bg.t_start}, {bg.t_end}]"
        )
    mark = check_mark(mark, params.n_words)
    times, nodes, marks = _history_arrays(history)
    if times.size and times.max() >= t:
        raise ValueError("history must lie strictly before t")

    value = bg.rate(node, t) * math.exp(
        spontaneous_mark_log_mass(mark, params.p_word[node]))
    if times.size == 0:
        return value

    om = params.omega[node, nodes]
    th = params.theta[node, nodes]
    kern = th * om * np.exp(-om * (t - times))
    kept = marks @ mark.astype(np.float64)
    gained = mark.sum() - kept
    lost = marks.sum(axis=1) - kept
    absent = params.n_words - gained - lost - kept
    log_trans = (gained * np.log(params.p_on[node, nodes])
                 + absent * np.log1p(-params.p_on[node, nodes])
                 + lost * np.log(params.p_off[node, nodes])
                 + kept * np.log1p(-params.p_off[node, nodes]))
    return value + float(np.sum(kern * np.exp(log_trans)))


def log_likelihood(params: ModelParams, events: EventSequence,
                   t_end: float | None = None,
                   edge_correction: bool = True) -> float:
    """Log-likelihood of an event sequence over ``[t_start, t_end]``.

    Sum of log marked intensities at the events minus the compensator.
    Mark masses are normalized over the mark space, so the compensator
    integrates the ground intensity only: the full background mass plus,
    per event, the expected offspring mass on every node.  With
    ``edge_correction`` the offspring mass is censored at the window end
    (the exact finite-window compensator); without it each event
    contributes its full expected offspring, which is the objective the
    EM updates in :mod:`hbtm.inference` maximize.

    Returns ``-inf`` (with a logged diagnostic) if any event has zero
    intensity.
    """
    bg = params.background
    if t_end is None:
        t_end = bg.t_end
    if t_end > bg.t_end + 1e-12:
        raise ValueError(f"t_end={t_end} beyond the background window end {bg.t_end}")
    n = len(events)
    if n and (events.times[0] < bg.t_start or events.times[-1] > t_end):
        raise DataError("events fall outside [t_start, t_end]")

    total = -bg.total_mass(t_end)
    if n == 0:
        return total

    trig_rate = params.theta[:, events.nodes]  # (S, N)
    if edge_correction:
        om = params.omega[:, events.nodes]
        trig_rate = trig_rate * (1.0 - np.exp(-om * (t_end - events.times)[None, :]))
    total -= float(trig_rate.sum())

    w = params.n_words
    n_on = events.marks.sum(axis=1).astype(np.float64)
    with np.errstate(divide="ignore"):
        # a zero background rate is legal; the event may still be triggered
        log_spont = (np.log(bg.rate_at(events.nodes, events.times))
                     + n_on * np.log(params.p_word[events.nodes])
                     + (w - n_on) * np.log1p(-params.p_word[events.nodes]))

    fmarks = events.marks.astype(np.float64)
    for i in range(n):
        hi = np.searchsorted(events.times, events.times[i], side="left")
        lam = math.exp(log_spont[i]) if np.isfinite(log_spont[i]) else 0.0
        if hi > 0:
            node = int(events.nodes[i])
            pnodes = events.nodes[:hi]
            om = params.omega[node, pnodes]
            kern = params.theta[node, pnodes] * om * np.exp(
                -om * (events.times[i] - events.times[:hi]))
            kept = fmarks[:hi] @ fmarks[i]
            gained = n_on[i] - kept
            lost = n_on[:hi] - kept
            absent = w - gained - lost - kept
            log_trans = (gained * np.log(params.p_on[node, pnodes])
                         + absent * np.log1p(-params.p_on[node, pnodes])
                         + lost * np.log(params.p_off[node, pnodes])
                         + kept * np.log1p(-params.p_off[node, pnodes]))
            lam += float(np.sum(kern * np.exp(log_trans)))
        if lam <= 0.0:
            logger.warning(
                "zero intensity at event %d (t=%.6f, node %d); likelihood is -inf",
                i, events.times[i], events.nodes[i])
            return -math.inf
        total += math.log(lam)
    return total
