"""EM estimation of the marked-process parameters.

The expectation step attributes each event to a candidate parent (or to
spontaneity) with posterior weights computed in log space; the
maximization step applies closed-form weighted maximum-likelihood
updates.  Candidate parents are limited to a trailing time window
``tau_max_days`` for speed; the reported objective uses the same
truncated event intensity together with the untruncated expected
offspring mass, which is exactly the function those closed-form updates
ascend, so the trace is guaranteed nondecreasing.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .events import EventSequence
from .exceptions import ConfigError, DataError, NumericalError
from .model import (
    OMEGA_MAX,
    OMEGA_MIN,
    PROB_EPS,
    BackgroundRate,
    ModelParams,
    n_bins_for,
)

logger = logging.getLogger("hbtm.inference")

TYING_MODES = ("pair", "receiver", "global")

# Decreases beyond this relative slack indicate an update-formula bug.
MONOTONE_RTOL = 1e-8


@dataclass
class FitConfig:
    """Estimation settings; every field has a safe default.

    ``tau_max_days=None`` disables parent-candidate truncation.
    ``tying`` shares the delay and word-switch parameters across node
    pairs: "pair" keeps them separate, "receiver" pools over parents for
    each receiving node, "global" pools everything.  ``n_restarts``
    adds that many extra runs from jittered initializations (seeded, so
    still deterministic) and keeps the best final objective.
    """

    tau_max_days: float | None = 14.0
    bin_width_days: float = 1.0
    max_iter: int = 200
    tol: float = 1e-6
    tying: str = "pair"
    omega_min: float = OMEGA_MIN
    omega_max: float = OMEGA_MAX
    prob_eps: float = PROB_EPS
    zero_mass_tol: float = 1e-8
    t_start: float | None = None
    t_end: float | None = None
    n_restarts: int = 0
    restart_jitter: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.tau_max_days is not None and not self.tau_max_days > 0:
            raise ConfigError("tau_max_days must be positive or null")
        if not self.bin_width_days > 0:
            raise ConfigError("bin_width_days must be positive")
        if self.max_iter < 0:
            raise ConfigError("max_iter must be >= 0")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.tying not in TYING_MODES:
            raise ConfigError(
                f"tying must be one of {TYING_MODES}, got {self.tying!r}")
        if not PROB_EPS <= self.prob_eps < 0.5:
            raise ConfigError(f"prob_eps must lie in [{PROB_EPS}, 0.5)")
        if self.omega_min < OMEGA_MIN or self.omega_max > OMEGA_MAX:
            raise ConfigError(
                f"omega bounds must stay within [{OMEGA_MIN}, {OMEGA_MAX}]")
        if not self.omega_min < self.omega_max:
            raise ConfigError("omega_min must be below omega_max")
        if not self.zero_mass_tol > 0:
            raise ConfigError("zero_mass_tol must be positive")
        if self.n_restarts < 0 or self.restart_jitter < 0:
            raise ConfigError("n_restarts and restart_jitter must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "FitConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad config file {path}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class BranchingMatrix:
    """Sparse row-stochastic parent attributions.

    Row ``i`` covers the candidate parents of event ``i`` (events within
    the truncation window strictly before it) plus the event itself;
    the self entry is the spontaneous responsibility and sits last in
    the row (columns are ascending).  Stored flat in CSR style.
    """

    def __init__(self, row_ptr, cols, values, n_events: int):
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self.n_events = int(n_events)
        if self.row_ptr.shape != (self.n_events + 1,):
            raise ValueError("row_ptr must have one entry per event plus one")
        if self.cols.shape != self.values.shape:
            raise ValueError("cols and values must align")
        diag = self.row_ptr[1:] - 1
        if self.n_events and not np.array_equal(self.cols[diag],
                                                np.arange(self.n_events)):
            raise ValueError("every row must end with its self entry")
        self._diag = diag

    def __len__(self) -> int:
        return self.n_events

    @property
    def nnz(self) -> int:
        return int(self.cols.shape[0])

    def row(self, i: int):
        sl = slice(self.row_ptr[i], self.row_ptr[i + 1])
        return self.cols[sl], self.values[sl]

    def spontaneous(self) -> np.ndarray:
        """q_ii per event: posterior probability of being spontaneous."""
        return self.values[self._diag]

    def off_diagonal(self):
        """(child, parent, weight) arrays for the triggered attributions."""
        mask = np.ones(self.nnz, dtype=bool)
        mask[self._diag] = False
        child = np.repeat(np.arange(self.n_events),
                          np.diff(self.row_ptr))[mask]
        return child, self.cols[mask], self.values[mask]

    def total_mass(self) -> float:
        return float(self.values.sum())

    def validate(self, times=None, tau_max: float | None = None,
                 tol: float = 1e-9):
        if (self.values < -tol).any() or (self.values > 1 + tol).any():
            raise DataError("attribution weights must lie in [0, 1]")
        sums = np.add.reduceat(self.values, self.row_ptr[:-1]) \
            if self.n_events else np.zeros(0)
        if self.n_events and np.abs(sums - 1.0).max() > tol:
            raise DataError("attribution rows must each sum to 1")
        if times is not None:
            child = np.repeat(np.arange(self.n_events), np.diff(self.row_ptr))
            dt = times[child] - times[self.cols]
            off = self.cols != child
            if (dt[off] <= 0).any():
                raise DataError("parents must strictly precede their children")
            if tau_max is not None and (dt[off] > tau_max + 1e-12).any():
                raise DataError("attribution support exceeds the time window")

    def to_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            child = np.repeat(np.arange(self.n_events), np.diff(self.row_ptr))
            for i, j, q in zip(child, self.cols, self.values):
                fh.write(f"[{int(i)}, {int(j)}, {float(q)!r}]\n")

    @classmethod
    def from_jsonl(cls, path) -> "BranchingMatrix":
        child, cols, values = [], [], []
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    i, j, q = json.loads(line)
                except (json.JSONDecodeError, ValueError):
                    raise DataError(
                        f"bad attribution triplet at line {line_no}") from None
                child.append(int(i))
                cols.append(int(j))
                values.append(float(q))
        if not child:
            return cls(np.zeros(1, np.int64), [], [], 0)
        child = np.asarray(child)
        if (np.diff(child) < 0).any():
            raise DataError("attribution rows must appear in event order")
        n = int(child[-1]) + 1
        counts = np.bincount(child, minlength=n)
        row_ptr = np.concatenate([[0], np.cumsum(counts)])
        return cls(row_ptr, cols, values, n)


class _PairTable:
    """Flat per-candidate features shared by the E and M steps."""

    def __init__(self, events: EventSequence, row_ptr, cols):
        self.row_ptr = row_ptr
        self.cols = cols
        n = len(events)
        self.n_events = n
        self.child = np.repeat(np.arange(n), np.diff(row_ptr))
        self.diag_pos = row_ptr[1:] - 1
        self.off = np.ones(cols.shape[0], dtype=bool)
        self.off[self.diag_pos] = False
        self.dt = events.times[self.child] - events.times[self.cols]
        s = events.n_nodes
        self.pair = events.nodes[self.child] * s + events.nodes[self.cols]
        self.n_on = events.marks.sum(axis=1).astype(np.float64)
        kept = np.empty(cols.shape[0])
        fmarks = events.marks.astype(np.float64)
        for i in range(n):
            sl = slice(row_ptr[i], row_ptr[i + 1])
            kept[sl] = fmarks[cols[sl]] @ fmarks[i]
        self.w1 = self.n_on[self.child] - kept          # on child only
        self.w3 = self.n_on[self.cols] - kept           # on parent only
        self.w4 = kept                                  # on both
        self.w2 = events.n_words - self.w1 - self.w3 - kept

    @classmethod
    def build(cls, events: EventSequence, tau_max: float | None):
        times = events.times
        n = len(events)
        hi = np.searchsorted(times, times, side="left")
        if tau_max is None:
            lo = np.zeros(n, dtype=np.int64)
        else:
            lo = np.searchsorted(times, times - tau_max, side="left")
        n_off = hi - lo
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(n_off + 1, out=row_ptr[1:])
        cols = np.empty(row_ptr[-1], dtype=np.int64)
        within = (np.arange(int(n_off.sum()))
                  - np.repeat(np.cumsum(n_off) - n_off, n_off))
        cols[np.repeat(row_ptr[:-1], n_off) + within] = \
            np.repeat(lo, n_off) + within
        cols[row_ptr[1:] - 1] = np.arange(n)
        return cls(events, row_ptr, cols)

    @classmethod
    def from_support(cls, events: EventSequence, matrix: BranchingMatrix):
        return cls(events, matrix.row_ptr, matrix.cols)


def _log_responsibility_terms(params: ModelParams, events: EventSequence,
                              table: _PairTable) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_theta = np.log(params.theta).ravel()
        log_omega = np.log(params.omega).ravel()
        log_pon = np.log(params.p_on).ravel()
        log1m_pon = np.log1p(-params.p_on).ravel()
        log_poff = np.log(params.p_off).ravel()
        log1m_poff = np.log1p(-params.p_off).ravel()
        bg_at = params.background.rate_at(events.nodes, events.times)
        log_mu = np.log(bg_at)
    p = table.pair
    vals = (log_theta[p] + log_omega[p] - params.omega.ravel()[p] * table.dt
            + table.w1 * log_pon[p] + table.w2 * log1m_pon[p]
            + table.w3 * log_poff[p] + table.w4 * log1m_poff[p])
    n_on = table.n_on
    diag_vals = (log_mu + n_on * np.log(params.p_word[events.nodes])
                 + (events.n_words - n_on)
                 * np.log1p(-params.p_word[events.nodes]))
    vals[table.diag_pos] = diag_vals
    return vals


def _responsibilities(params, events, table):
    """Normalized attribution weights plus per-event log intensities."""
    logv = _log_responsibility_terms(params, events, table)
    row_max = np.maximum.reduceat(logv, table.row_ptr[:-1])
    dead = ~np.isfinite(row_max)
    if dead.any():
        i = int(np.flatnonzero(dead)[0])
        raise NumericalError(
            f"event {i} (t={events.times[i]:.6f}, node {events.nodes[i]}) has "
            "zero intensity under the current parameters; its spontaneous "
            "rate is zero and no candidate parent can reach it")
    shifted = np.exp(logv - row_max[table.child])
    row_sum = np.add.reduceat(shifted, table.row_ptr[:-1])
    q = shifted / row_sum[table.child]
    log_intensity = row_max + np.log(row_sum)
    return q, log_intensity


def e_step(params: ModelParams, events: EventSequence,
           tau_max: float | None = 14.0) -> BranchingMatrix:
    """Posterior parent attributions under ``params``.

    Off-diagonal weights are proportional to the triggering kernel times
    the mark-transmission mass; the self weight is proportional to the
    spontaneous rate times the spontaneous mark mass.  Rows normalize
    over their truncated candidate set via log-sum-exp.
    """
    table = _PairTable.build(events, tau_max)
    q, _ = _responsibilities(params, events, table)
    return BranchingMatrix(table.row_ptr, table.cols, q, len(events))


def _pool(mat: np.ndarray, tying: str) -> np.ndarray:
    if tying == "pair":
        return mat
    if tying == "receiver":
        return np.repeat(mat.sum(axis=1, keepdims=True), mat.shape[1], axis=1)
    return np.full_like(mat, mat.sum())


def _safe_ratio(num, den, fallback, dead_mask):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    bad = dead_mask | ~np.isfinite(out)
    return np.where(bad, fallback, out)


def _m_step_impl(events: EventSequence, table: _PairTable, q: np.ndarray,
                 prev: ModelParams, config: FitConfig) -> ModelParams:
    s = prev.n_nodes
    w = prev.n_words
    off = table.off
    pair = table.pair[off]
    qo = q[off]

    def pair_sum(weights):
        return np.bincount(pair, weights=weights, minlength=s * s) \
            .reshape(s, s)

    mass = pair_sum(qo)
    events_per_node = np.bincount(events.nodes, minlength=s).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = mass / events_per_node[None, :]
    theta = np.where(events_per_node[None, :] > 0, theta, 0.0)

    pooled_mass = _pool(mass, config.tying)
    dead = pooled_mass < config.zero_mass_tol
    omega = _safe_ratio(pooled_mass, _pool(pair_sum(qo * table.dt[off]),
                                           config.tying), prev.omega, dead)
    omega = np.clip(omega, config.omega_min, config.omega_max)

    p_lo, p_hi = config.prob_eps, 1.0 - config.prob_eps
    p_on = _safe_ratio(
        _pool(pair_sum(qo * table.w1[off]), config.tying),
        _pool(pair_sum(qo * (table.w1[off] + table.w2[off])), config.tying),
        prev.p_on, dead)
    p_off = _safe_ratio(
        _pool(pair_sum(qo * table.w3[off]), config.tying),
        _pool(pair_sum(qo * (table.w3[off] + table.w4[off])), config.tying),
        prev.p_off, dead)
    p_on = np.clip(p_on, p_lo, p_hi)
    p_off = np.clip(p_off, p_lo, p_hi)

    q_self = q[table.diag_pos]
    self_mass = np.bincount(events.nodes, weights=q_self, minlength=s)
    p_word = _safe_ratio(
        np.bincount(events.nodes, weights=q_self * table.n_on, minlength=s),
        w * self_mass, prev.p_word, self_mass < config.zero_mass_tol)
    p_word = np.clip(p_word, p_lo, p_hi)

    bg = prev.background
    bin_idx = bg.bin_index(events.times)
    bins = np.zeros((s, bg.n_bins))
    np.add.at(bins, (events.nodes, bin_idx), q_self)
    bins /= bg.bin_widths()[None, :]
    background = BackgroundRate(bins, bg.bin_width, bg.t_start, bg.t_end)

    return ModelParams(background, p_word, theta, omega, p_on, p_off, w)


def m_step(events: EventSequence, q: BranchingMatrix, prev: ModelParams,
           config: FitConfig | None = None) -> ModelParams:
    """Closed-form weighted maximum-likelihood parameter updates.

    Expected offspring divides attributed mass by parent-node event
    counts; the delay rate is attributed mass over attributed delay;
    word-switch probabilities are attributed flip counts over exposure;
    the spontaneous word rate and background histogram reweight events
    by their self attribution.  Entries whose attributed mass falls
    below ``zero_mass_tol`` keep their previous values, except the
    offspring matrix, which legitimately hits zero.
    """
    config = config or FitConfig()
    q.validate()
    table = _PairTable.from_support(events, q)
    return _m_step_impl(events, table, q.values, prev, config)


def initialize(events: EventSequence, config: FitConfig | None = None
               ) -> ModelParams:
    """Deterministic starting point for the EM loop.

    The spontaneous word rate starts at each node's empirical word-on
    share; the background starts at the per-node event histogram; the
    interaction matrices start flat.
    """
    config = config or FitConfig()
    if len(events) == 0:
        raise DataError("cannot initialize from an empty event sequence")
    s, w = events.n_nodes, events.n_words
    delta = config.bin_width_days
    t_start = (config.t_start if config.t_start is not None
               else math.floor(events.times[0] / delta) * delta)
    if config.t_end is not None:
        t_end = config.t_end
    else:
        # whole bins only, so the histogram update divides by full widths
        t_end = t_start + delta * n_bins_for(
            max(events.times[-1] - t_start, delta), delta)
    if events.times[0] < t_start or events.times[-1] > t_end:
        raise DataError(
            f"events fall outside the fit window [{t_start}, {t_end}]")

    k = n_bins_for(t_end - t_start, delta)
    bins = np.zeros((s, k))
    bg_probe = BackgroundRate(np.zeros((s, k)), delta, t_start, t_end)
    np.add.at(bins, (events.nodes, bg_probe.bin_index(events.times)), 1.0)
    bins /= bg_probe.bin_widths()[None, :]
    counts = np.bincount(events.nodes, minlength=s).astype(np.float64)
    bins[counts == 0] = 1e-6  # silent nodes keep a faint floor

    n_on = np.bincount(events.nodes, weights=events.marks.sum(axis=1),
                       minlength=s)
    with np.errstate(invalid="ignore"):
        p_word = n_on / (w * counts)
    p_word = np.where(counts > 0, p_word, config.prob_eps)
    p_word = np.clip(p_word, config.prob_eps, 1.0 - config.prob_eps)

    return ModelParams(
        BackgroundRate(bins, delta, t_start, t_end),
        p_word,
        np.full((s, s), 0.1),
        np.full((s, s), 1.0),
        np.full((s, s), 0.05),
        np.full((s, s), 0.5),
        w,
    )


@dataclass
class FitReport:
    """Outcome of one EM run."""

    iterations: int
    log_likelihood_trace: list[float]
    converged: bool
    final_params: ModelParams
    branching: BranchingMatrix
    restarts_used: int = 0

    @property
    def final_log_likelihood(self) -> float:
        return self.log_likelihood_trace[-1]


def _em_objective(params, events, log_intensity) -> float:
    # truncated intensity term + untruncated offspring compensator;
    # the closed-form updates are exact maximizers for this objective
    offspring = float(params.theta.sum(axis=0)
                      @ np.bincount(events.nodes, minlength=params.n_nodes))
    return float(log_intensity.sum()) - params.background.total_mass() \
        - offspring


def _run_em(events, config, params) -> FitReport:
    table = _PairTable.build(events, config.tau_max_days)
    trace: list[float] = []
    converged = False
    q = None
    for iteration in range(config.max_iter + 1):
        q, log_intensity = _responsibilities(params, events, table)
        ll = _em_objective(params, events, log_intensity)
        if trace:
            prev = trace[-1]
            slack = MONOTONE_RTOL * max(abs(prev), 1.0)
            if ll < prev - slack:
                raise NumericalError(
                    f"objective decreased at iteration {iteration}: "
                    f"{prev:.10g} -> {ll:.10g}")
            trace.append(ll)
            if abs(ll - prev) <= config.tol * max(abs(prev), 1e-12):
                converged = True
                break
        else:
            trace.append(ll)
        if iteration == config.max_iter:
            break
        params = _m_step_impl(events, table, q, params, config)
    matrix = BranchingMatrix(table.row_ptr, table.cols, q, len(events))
    return FitReport(
        iterations=len(trace) - 1,
        log_likelihood_trace=trace,
        converged=converged,
        final_params=params,
        branching=matrix,
    )


def _jittered(params: ModelParams, config: FitConfig,
              rng: np.random.Generator) -> ModelParams:
    scale = config.restart_jitter

    def bump(mat):
        return mat * np.exp(scale * rng.standard_normal(np.shape(mat)))

    p_lo, p_hi = config.prob_eps, 1.0 - config.prob_eps
    return ModelParams(
        params.background,
        np.clip(bump(params.p_word), p_lo, p_hi),
        bump(params.theta),
        np.clip(bump(params.omega), config.omega_min, config.omega_max),
        np.clip(bump(params.p_on), p_lo, p_hi),
        np.clip(bump(params.p_off), p_lo, p_hi),
        params.n_words,
    )


def fit(events: EventSequence, config: FitConfig | None = None) -> FitReport:
    """Alternate attribution and update steps until the objective settles.

    Runs from the deterministic initialization; stops when the relative
    objective change drops below ``tol`` or after ``max_iter`` updates.
    A decrease beyond the monotonicity slack raises an error rather
    than returning silently wrong parameters.  With ``n_restarts`` set,
    additional seeded runs start from jittered initializations and the
    best final objective wins (ties keep the earliest run).
    """
    config = config or FitConfig()
    if len(events) == 0:
        raise DataError("cannot fit an empty event sequence")
    base = initialize(events, config)
    report = _run_em(events, config, base)
    for restart in range(config.n_restarts):
        rng = np.random.default_rng(config.seed + restart + 1)
        candidate = _run_em(events, config, _jittered(base, config, rng))
        if candidate.final_log_likelihood > report.final_log_likelihood:
            report = replace(candidate, restarts_used=restart + 1)
    return report
