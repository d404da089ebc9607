"""Estimator-interface conventions: fit/transform/predict/score/clone."""

import numpy as np
import pytest
from sklearn.base import clone

from hbtm.estimator import HawkesTopicModel
from hbtm.exceptions import ConfigError
from hbtm.inference import BranchingMatrix
from hbtm.model import ModelParams

from test_model import random_events


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(11)
    events = random_events(rng, 120, n_nodes=2, n_words=5, t_end=40.0)
    est = HawkesTopicModel(max_iter=15, bin_width_days=8.0,
                                   tau_max_days=10.0)
    return est.fit(events), events


def test_fit_exposes_learned_state(fitted):
    est, events = fitted
    assert isinstance(est.params_, ModelParams)
    assert isinstance(est.branching_, BranchingMatrix)
    assert est.n_iter_ == len(est.log_likelihood_trace_) - 1
    assert np.all(np.diff(est.log_likelihood_trace_) >=
                  -1e-8 * np.abs(est.log_likelihood_trace_[:-1]))
    assert isinstance(est.converged_, bool)


def test_transform_rows_are_normalized(fitted):
    est, events = fitted
    q = est.transform(events)
    sums = np.add.reduceat(q.values, q.row_ptr[:-1])
    assert np.allclose(sums, 1.0, atol=1e-12)


def test_predict_returns_valid_parents(fitted):
    est, events = fitted
    parents = est.predict(events)
    assert parents.shape == (events.n_events,)
    for child, parent in enumerate(parents):
        assert parent == -1 or 0 <= parent < child


def test_score_is_mean_per_event(fitted):
    est, events = fitted
    from hbtm.model import log_likelihood
    assert est.score(events) == pytest.approx(
        log_likelihood(est.params_, events) / events.n_events)


def test_fit_transform_matches_training_attributions(fitted):
    est, events = fitted
    again = HawkesTopicModel(max_iter=15, bin_width_days=8.0,
                                     tau_max_days=10.0)
    q = again.fit_transform(events)
    assert np.array_equal(q.values, est.branching_.values)


def test_clone_and_params_round_trip():
    est = HawkesTopicModel(tying="global", max_iter=7, seed=3)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(max_iter=9)
    assert est.max_iter == 9
    with pytest.raises(ValueError):
        est.set_params(not_a_knob=1)


def test_bad_config_surfaces_at_fit_time():
    rng = np.random.default_rng(0)
    events = random_events(rng, 10, n_nodes=2, n_words=3)
    with pytest.raises(ConfigError):
        HawkesTopicModel(tying="bogus").fit(events)


def test_unfitted_and_wrong_input_types_are_rejected():
    est = HawkesTopicModel()
    rng = np.random.default_rng(1)
    events = random_events(rng, 10, n_nodes=2, n_words=3)
    with pytest.raises(RuntimeError, match="not fitted"):
        est.predict(events)
    with pytest.raises(TypeError, match="EventSequence"):
        est.fit(np.zeros((5, 3)))
