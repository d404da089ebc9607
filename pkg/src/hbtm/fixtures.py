"""Bundled synthetic dataset: a small self-excited posting network.

Five accounts post short health-topic texts over sixty days.  Events
come from the package's own simulator under fixed parameters and a
fixed seed, then get rendered back into raw posts (word lists plus a
constant anchor token), so the full ingest -> fit -> topics -> network
path can run end to end with known ground truth alongside.
"""

from __future__ import annotations

import json

import numpy as np

from .io import atomic_write, write_parents
from .model import BackgroundRate, ModelParams
from .simulator import as_sequence, branching_ratio, simulate

FIXTURE_SEED = 7

# every rendered post also contains this token, so seeding keyword
# expansion with it retains the whole corpus
ANCHOR_WORD = "covid"

VOCABULARY = [
    "risk", "lockdown", "exposure", "spread", "distancing", "outbreak",
    "cases", "surge",
    "vaccine", "treatment", "dose", "trial", "immunity", "booster",
    "antibody", "therapy",
    "test", "testing", "positive", "negative", "swab", "results",
    "lab", "screening",
]

NODE_IDS = ["user-alpha", "user-bravo", "user-charlie", "user-delta",
            "user-echo"]
NODE_PARTIES = ["D", "R", "D", "R", "D"]

_T_END = 60.0
_BIN_WIDTH = 1.0
_BASE_RATES = [1.35, 1.25, 1.15, 1.05, 0.95]
_TARGET_RADIUS = 0.62


def fixture_params() -> ModelParams:
    """Fixed generating parameters for the bundled dataset."""
    s = len(NODE_IDS)
    k = int(_T_END / _BIN_WIDTH)
    centers = (np.arange(k) + 0.5) * _BIN_WIDTH
    wave = 1.0 + 0.3 * np.sin(2 * np.pi * centers / 7.0)
    bins = np.outer(_BASE_RATES, wave)

    theta = 0.25 * np.eye(s)
    for i in range(s):
        theta[i, (i + 1) % s] = 0.12
    theta[0, 2] = 0.08
    theta *= _TARGET_RADIUS / branching_ratio(theta)

    return ModelParams(
        background=BackgroundRate(bins, _BIN_WIDTH, 0.0, _T_END),
        p_word=np.full(s, 0.18),
        theta=theta,
        omega=np.full((s, s), 1.6),
        p_on=np.full((s, s), 0.03),
        p_off=np.full((s, s), 0.25),
        n_words=len(VOCABULARY),
    )


def fixture_events(seed: int = FIXTURE_SEED):
    """Simulated event sequence plus ground-truth parent indices."""
    params = fixture_params()
    sim = simulate(params, seed=seed)
    events, parents = as_sequence(sim, len(NODE_IDS), len(VOCABULARY))
    return events, parents, params


def render_posts(events) -> list[dict]:
    """Raw-post records (JSONL-ready dicts) for an event sequence."""
    records = []
    for i in range(events.n_events):
        words = [VOCABULARY[j] for j in np.flatnonzero(events.marks[i])]
        node = int(events.nodes[i])
        records.append({
            "post_id": f"post-{i:06d}",
            "timestamp": float(events.times[i]),
            "node_id": NODE_IDS[node],
            "text": " ".join(words + [ANCHOR_WORD]),
            "attrs": {"party": NODE_PARTIES[node]},
        })
    return records


def write_fixture(out_dir, seed: int = FIXTURE_SEED) -> dict:
    """Write posts.jsonl, truth.jsonl, and params.json under out_dir."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    events, parents, params = fixture_events(seed)
    paths = {
        "posts": out / "posts.jsonl",
        "truth": out / "truth.jsonl",
        "params": out / "params.json",
    }
    with atomic_write(paths["posts"]) as fh:
        for rec in render_posts(events):
            fh.write(json.dumps(rec) + "\n")
    write_parents(paths["truth"], parents)
    with atomic_write(paths["params"]) as fh:
        fh.write(params.to_json())
    return {k: str(v) for k, v in paths.items()}


def fixture_pipeline_config(posts_path, out_dir) -> dict:
    """Pipeline settings sized for the bundled dataset."""
    return {
        "input_path": str(posts_path),
        "output_dir": str(out_dir),
        "epoch": "2020-01-01",
        "n_words": len(VOCABULARY) + 1,
        "keyword_seeds": [ANCHOR_WORD],
        "em": {
            "tau_max_days": 10.0,
            "bin_width_days": 1.0,
            "max_iter": 40,
            "tol": 1e-5,
        },
        "min_cluster_size": 11,
        "subtopic_min_size": 2,
        "network_threshold": 10.0,
        "subtopics": [["risk"], ["vaccine", "treatment"], ["test"]],
        "forest_mode": "map",
        "forest_seed": 0,
        "sim_seed": 0,
    }
