"""Marked Hawkes process toolkit for timestamped short-text streams.

Events are posts: a timestamp, a posting node, and a binary
word-presence vector over a fixed dictionary.  The package covers the
full workflow: corpus preparation (:mod:`hbtm.corpus`), intensity and
likelihood evaluation (:mod:`hbtm.model`), EM parameter estimation
(:mod:`hbtm.inference`), branching-based topic clustering
(:mod:`hbtm.topics`), influence networks (:mod:`hbtm.influence`),
simulation (:mod:`hbtm.simulator`), and a config-driven end-to-end
pipeline (:mod:`hbtm.pipeline`) with a ``hbtm`` command-line front
end.  A scikit-learn style wrapper lives in :mod:`hbtm.estimator`.
"""

from .events import EventSequence, MarkedEvent, NodeRoster, RawPost
from .exceptions import ConfigError, DataError, HbtmError, NumericalError
from .corpus import (
    Dictionary,
    KeywordExpansion,
    build_dictionary,
    expand_keywords,
    filter_by_keywords,
    ingest_posts,
    load_stopwords,
    to_marked_events,
    tokenize,
)
from .model import (
    BackgroundRate,
    ModelParams,
    intensity,
    log_likelihood,
    mark_overlap,
    spontaneous_mark_log_mass,
    triggered_mark_log_mass,
)
from .inference import (
    BranchingMatrix,
    FitConfig,
    FitReport,
    e_step,
    fit,
    initialize,
    m_step,
)
from .simulator import SimulatedEvent, as_sequence, branching_ratio, simulate
from .topics import (
    BranchingForest,
    CoherenceReport,
    TopicCluster,
    coherence_report,
    extract_clusters,
    sample_forest,
    timeline_export,
    uci_coherence,
)
from .influence import (
    InfluenceNetwork,
    NodeActivity,
    activity_decomposition,
    degree_rankings,
    export_graph,
    influence_network,
    network_from_json,
)
from .pipeline import PipelineConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "BackgroundRate", "BranchingForest", "BranchingMatrix",
    "CoherenceReport", "ConfigError", "DataError", "Dictionary",
    "EventSequence", "FitConfig", "FitReport", "HawkesTopicModel",
    "HbtmError", "InfluenceNetwork", "KeywordExpansion", "MarkedEvent",
    "ModelParams", "NodeActivity", "NodeRoster", "NumericalError",
    "PipelineConfig", "RawPost", "SimulatedEvent", "TopicCluster",
    "activity_decomposition", "as_sequence", "branching_ratio",
    "build_dictionary", "coherence_report", "degree_rankings", "e_step",
    "expand_keywords", "export_graph", "extract_clusters",
    "filter_by_keywords", "fit", "influence_network", "ingest_posts",
    "initialize", "intensity", "load_stopwords", "log_likelihood",
    "m_step", "mark_overlap", "network_from_json", "run_pipeline",
    "sample_forest", "simulate", "spontaneous_mark_log_mass",
    "timeline_export", "to_marked_events", "tokenize",
    "triggered_mark_log_mass", "uci_coherence",
]


def __getattr__(name):
    # deferred so plain imports never pay the scikit-learn startup cost
    if name == "HawkesTopicModel":
        from .estimator import HawkesTopicModel
        return HawkesTopicModel
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
