"""Tests for the branching-process generator and its stability guard."""

import math

import numpy as np
import pytest

from hbtm.exceptions import ConfigError
from hbtm.model import BackgroundRate, ModelParams
from hbtm.simulator import SimulatedEvent, as_sequence, branching_ratio, simulate


def flat_params(s=1, w=4, mu=1.0, theta=0.5, omega=2.0, p_word=0.3,
                p_on=0.05, p_off=0.5, t_end=100.0, bin_width=None):
    bin_width = bin_width or t_end
    k = int(math.ceil(t_end / bin_width))
    return ModelParams(
        background=BackgroundRate(np.full((s, k), mu), bin_width, 0.0, t_end),
        p_word=np.full(s, p_word),
        theta=np.full((s, s), theta) if np.isscalar(theta) else np.asarray(theta),
        omega=np.full((s, s), omega),
        p_on=np.full((s, s), p_on),
        p_off=np.full((s, s), p_off),
        n_words=w,
    )


class TestBranchingRatio:
    def test_scalar_and_zero(self):
        assert branching_ratio(np.array([[0.5]])) == pytest.approx(0.5, abs=1e-8)
        assert branching_ratio(np.zeros((3, 3))) == pytest.approx(0.0, abs=1e-8)

    def test_symmetric_two_by_two(self):
        got = branching_ratio(np.array([[0.2, 0.3], [0.3, 0.2]]))
        assert got == pytest.approx(0.5, abs=1e-6)

    def test_accepts_model_params(self):
        params = flat_params(s=2, theta=0.25)
        assert branching_ratio(params) == pytest.approx(0.5, abs=1e-6)

    def test_rejects_bad_matrices(self):
        with pytest.raises(ValueError):
            branching_ratio(np.array([[0.1, 0.2]]))
        with pytest.raises(ValueError):
            branching_ratio(np.array([[-0.1]]))


class TestSimulateContract:
    def test_deterministic_per_seed(self):
        params = flat_params(s=2, theta=0.3, t_end=30.0)
        a = simulate(params, seed=11)
        b = simulate(params, seed=11)
        c = simulate(params, seed=12)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert x.timestamp == y.timestamp
            assert x.node_index == y.node_index
            assert x.parent_index == y.parent_index
            np.testing.assert_array_equal(x.mark, y.mark)
        assert any(x.timestamp != y.timestamp for x, y in zip(a, c)) or \
            len(a) != len(c)

    def test_structural_invariants(self):
        params = flat_params(s=2, theta=0.4, t_end=40.0, mu=1.5)
        events = simulate(params, seed=3)
        assert len(events) > 30
        times = [e.timestamp for e in events]
        assert times == sorted(times)
        for i, e in enumerate(events):
            assert e.mark.shape == (params.n_words,)
            assert set(np.unique(e.mark)) <= {0, 1}
            assert 0.0 <= e.timestamp <= 40.0
            if e.parent_index is None:
                assert e.generation == 0
            else:
                parent = events[e.parent_index]
                assert parent.timestamp < e.timestamp
                assert e.generation == parent.generation + 1
                assert e.parent_index < i

    def test_supercritical_refused(self):
        with pytest.raises(ConfigError, match="spectral radius"):
            simulate(flat_params(theta=1.2), seed=0)
        with pytest.raises(ConfigError, match="spectral radius"):
            simulate(flat_params(theta=1.0), seed=0)

    def test_t_end_outside_window_refused(self):
        params = flat_params(t_end=10.0)
        with pytest.raises(ConfigError):
            simulate(params, t_end=11.0, seed=0)
        with pytest.raises(ConfigError):
            simulate(params, t_end=0.0, seed=0)

    def test_no_triggering_means_single_generation(self):
        params = flat_params(theta=0.0, t_end=50.0, mu=2.0)
        events = simulate(params, seed=5)
        assert events
        assert all(e.generation == 0 and e.parent_index is None
                   for e in events)

    def test_as_sequence_round_trip(self):
        params = flat_params(s=2, theta=0.3, t_end=30.0)
        events = simulate(params, seed=9)
        seq, parents = as_sequence(events, 2, params.n_words)
        assert len(seq) == len(events) == len(parents)
        assert seq.n_words == params.n_words
        spontaneous = sum(1 for e in events if e.parent_index is None)
        assert int((parents == -1).sum()) == spontaneous
        assert seq.post_ids[0] == "sim-000000"


class TestSimulateStatistics:
    def test_immigrant_count_matches_background_mass(self):
        # piecewise window cut mid-bin: expected mass scales with coverage
        params = flat_params(theta=0.0, mu=2.0, t_end=10.0, bin_width=4.0)
        t_cut = 7.5
        expected = 2.0 * t_cut
        counts = [len(simulate(params, t_end=t_cut, seed=seed))
                  for seed in range(200)]
        se = math.sqrt(expected / len(counts))
        assert abs(np.mean(counts) - expected) <= 3.0 * se

    def test_offspring_and_delay_means(self):
        theta, omega, t_end = 0.5, 2.0, 150.0
        params = flat_params(theta=theta, omega=omega, mu=1.0, t_end=t_end)
        events = simulate(params, seed=0)
        exposed = [i for i, e in enumerate(events)
                   if e.timestamp <= t_end - 5.0]
        children = {i: 0 for i in exposed}
        delays = []
        for e in events:
            if e.parent_index in children:
                children[e.parent_index] += 1
                delays.append(e.timestamp - events[e.parent_index].timestamp)
        n = len(exposed)
        assert n > 200
        mean_offspring = np.mean([children[i] for i in exposed])
        assert abs(mean_offspring - theta) <= 3.0 * math.sqrt(theta / n)
        mean_delay = np.mean(delays)
        assert abs(mean_delay - 1.0 / omega) <= \
            3.0 * (1.0 / omega) / math.sqrt(len(delays))

    def test_mark_flip_rates(self):
        p_on, p_off = 0.2, 0.4
        params = flat_params(w=50, theta=0.6, omega=3.0, mu=2.0, t_end=60.0,
                             p_word=0.5, p_on=p_on, p_off=p_off)
        events = simulate(params, seed=1)
        on_trials = on_hits = off_trials = off_hits = 0
        for e in events:
            if e.parent_index is None:
                continue
            pmark = events[e.parent_index].mark
            off_words = pmark == 0
            on_words = pmark == 1
            on_trials += int(off_words.sum())
            on_hits += int(e.mark[off_words].sum())
            off_trials += int(on_words.sum())
            off_hits += int((1 - e.mark[on_words]).sum())
        assert on_trials > 1000 and off_trials > 1000
        se_on = math.sqrt(p_on * (1 - p_on) / on_trials)
        se_off = math.sqrt(p_off * (1 - p_off) / off_trials)
        assert abs(on_hits / on_trials - p_on) <= 3.0 * se_on
        assert abs(off_hits / off_trials - p_off) <= 3.0 * se_off

    def test_identity_transmission_at_vanishing_flip_rates(self):
        params = flat_params(w=6, theta=0.5, mu=2.0, t_end=40.0,
                             p_on=1e-6, p_off=1e-6)
        events = simulate(params, seed=2)
        assert any(e.parent_index is not None for e in events)
        for e in events:
            if e.parent_index is not None:
                np.testing.assert_array_equal(
                    e.mark, events[e.parent_index].mark)

    def test_parentage_recovers_offspring_matrix(self):
        theta = np.array([[0.2, 0.3], [0.1, 0.2]])
        params = flat_params(s=2, theta=theta, omega=2.0, mu=1.5, t_end=100.0)
        events = simulate(params, seed=4)
        cutoff = 100.0 - 5.0
        n_parent = np.zeros(2)
        counts = np.zeros((2, 2))
        for i, e in enumerate(events):
            if e.timestamp <= cutoff:
                n_parent[e.node_index] += 1
            if e.parent_index is not None:
                p = events[e.parent_index]
                if p.timestamp <= cutoff:
                    counts[e.node_index, p.node_index] += 1
        for a in range(2):
            for b in range(2):
                est = counts[a, b] / n_parent[b]
                se = math.sqrt(theta[a, b] / n_parent[b])
                assert abs(est - theta[a, b]) <= 3.0 * se
