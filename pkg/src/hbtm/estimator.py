"""Scikit-learn style front end over the EM fitting routines.

``HawkesTopicModel`` exposes the usual estimator verbs:
``fit`` learns the rate and word parameters from an event sequence,
``transform`` returns parent attributions for new events under the
learned parameters, ``predict`` picks each event's most plausible
parent, and ``score`` reports mean per-event log-likelihood.  The
class stays clone-compatible, so grid search over tying modes or
kernel windows works out of the box.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .events import EventSequence
from .inference import FitConfig, e_step, fit
from .model import OMEGA_MAX, OMEGA_MIN, PROB_EPS, log_likelihood
from .topics import sample_forest


def _as_sequence(X) -> EventSequence:
    if not isinstance(X, EventSequence):
        raise TypeError(
            "X must be an EventSequence; build one with "
            "corpus.to_marked_events or io.read_events")
    return X


class HawkesTopicModel(BaseEstimator):
    """Mutually exciting event model with binary bag-of-words marks.

    Parameters mirror :class:`hbtm.inference.FitConfig`; see there for
    semantics and validation rules.

    Attributes (after ``fit``)
    --------------------------
    params_ : learned :class:`hbtm.model.ModelParams`
    branching_ : parent attributions on the training events
    report_ : full :class:`hbtm.inference.FitReport`
    log_likelihood_trace_ : objective value per EM pass
    converged_ : whether the trace met the tolerance before max_iter
    n_iter_ : number of completed EM iterations
    """

    def __init__(self, tau_max_days: float | None = 14.0,
                 bin_width_days: float = 1.0, max_iter: int = 200,
                 tol: float = 1e-6, tying: str = "pair",
                 omega_min: float = OMEGA_MIN, omega_max: float = OMEGA_MAX,
                 prob_eps: float = PROB_EPS, zero_mass_tol: float = 1e-8,
                 t_start: float | None = None, t_end: float | None = None,
                 n_restarts: int = 0, restart_jitter: float = 0.5,
                 seed: int = 0):
        self.tau_max_days = tau_max_days
        self.bin_width_days = bin_width_days
        self.max_iter = max_iter
        self.tol = tol
        self.tying = tying
        self.omega_min = omega_min
        self.omega_max = omega_max
        self.prob_eps = prob_eps
        self.zero_mass_tol = zero_mass_tol
        self.t_start = t_start
        self.t_end = t_end
        self.n_restarts = n_restarts
        self.restart_jitter = restart_jitter
        self.seed = seed

    def _config(self) -> FitConfig:
        return FitConfig(**self.get_params())

    def fit(self, X, y=None):
        events = _as_sequence(X)
        report = fit(events, self._config())
        self.report_ = report
        self.params_ = report.final_params
        self.branching_ = report.branching
        self.log_likelihood_trace_ = report.log_likelihood_trace
        self.converged_ = report.converged
        self.n_iter_ = report.iterations
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise RuntimeError("estimator is not fitted yet; call fit first")

    def transform(self, X):
        """Parent attributions for ``X`` under the learned parameters."""
        self._check_fitted()
        events = _as_sequence(X)
        tau = self._config().tau_max_days
        return e_step(self.params_, events, tau_max=tau)

    def fit_transform(self, X, y=None):
        self.fit(X)
        return self.branching_

    def predict(self, X) -> np.ndarray:
        """Most plausible parent index per event; -1 means spontaneous."""
        q = self.transform(X)
        return sample_forest(q, mode="map").parents

    def score(self, X, y=None) -> float:
        """Mean per-event log-likelihood of ``X`` under the fitted model."""
        self._check_fitted()
        events = _as_sequence(X)
        if events.n_events == 0:
            raise ValueError("cannot score an empty event sequence")
        return log_likelihood(self.params_, events) / events.n_events
