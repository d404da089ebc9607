"""File formats for events, forests, clusters, and artifact manifests.

All writers are atomic: content goes to ``<path>.partial`` and is
renamed into place only on success, so an interrupted run leaves the
partial file visible instead of a truncated artifact.  Nothing here
embeds timestamps or machine state; identical inputs produce
byte-identical files, which the manifest hashes rely on.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .events import EventSequence, NodeRoster
from .exceptions import DataError

PARTIAL_SUFFIX = ".partial"


@contextlib.contextmanager
def atomic_write(path):
    """Open ``<path>.partial`` for writing; rename over ``path`` on success."""
    path = Path(path)
    tmp = path.with_name(path.name + PARTIAL_SUFFIX)
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        yield fh
    os.replace(tmp, path)


def write_text(path, text: str):
    with atomic_write(path) as fh:
        fh.write(text)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


def write_json(path, obj):
    write_text(path, dump_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_events(path, events: EventSequence):
    """Marked events as JSONL: a meta line, then one record per event.

    Marks are stored as sorted lists of active word indices.
    """
    with atomic_write(path) as fh:
        fh.write(json.dumps({"n_nodes": events.n_nodes,
                             "n_words": events.n_words}) + "\n")
        for i in range(events.n_events):
            rec = {
                "post_id": events.post_ids[i] if events.post_ids else "",
                "t": float(events.times[i]),
                "node": int(events.nodes[i]),
                "mark": np.flatnonzero(events.marks[i]).tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def read_events(path) -> EventSequence:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise DataError(f"{path.name}: missing meta line")
        try:
            meta = json.loads(header)
            n_nodes = int(meta["n_nodes"])
            n_words = int(meta["n_words"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise DataError(f"{path.name}: bad meta line") from None
        times, nodes, post_ids = [], [], []
        marks = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                row = np.zeros(n_words, dtype=np.uint8)
                on = rec["mark"]
                row[on] = 1
                times.append(float(rec["t"]))
                nodes.append(int(rec["node"]))
                post_ids.append(str(rec.get("post_id", "")))
                marks.append(row)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError,
                    IndexError):
                raise DataError(
                    f"{path.name}: bad event record at line {lineno}"
                ) from None
    marks_arr = (np.array(marks, dtype=np.uint8) if marks
                 else np.zeros((0, n_words), dtype=np.uint8))
    return EventSequence(np.array(times), np.array(nodes, dtype=np.int64),
                         marks_arr, n_nodes, post_ids=post_ids)


def write_posts(path, posts):
    """Normalized posts as JSONL with timestamps in fractional days."""
    with atomic_write(path) as fh:
        for p in posts:
            rec = {"post_id": p.post_id, "timestamp": float(p.timestamp),
                   "node_id": p.node_id, "text": p.text}
            if p.node_attrs:
                rec["attrs"] = p.node_attrs
            fh.write(json.dumps(rec) + "\n")


def write_roster(path, roster: NodeRoster):
    write_json(path, {"ids": list(roster.ids), "attrs": roster.attrs})


def read_roster(path) -> NodeRoster:
    doc = read_json(path)
    try:
        return NodeRoster(ids=list(doc["ids"]),
                          attrs={str(k): dict(v)
                                 for k, v in doc.get("attrs", {}).items()})
    except (KeyError, TypeError, AttributeError):
        raise DataError(f"{Path(path).name}: bad roster document") from None


def write_parents(path, parents):
    """Ground-truth or inferred parent links, one JSONL record per event."""
    with atomic_write(path) as fh:
        for child, parent in enumerate(np.asarray(parents)):
            rec = {"child": child,
                   "parent": None if parent < 0 else int(parent)}
            fh.write(json.dumps(rec) + "\n")


def read_parents(path) -> np.ndarray:
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if rec["child"] != len(out):
                    raise ValueError("child index out of order")
                parent = rec["parent"]
                out.append(-1 if parent is None else int(parent))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise DataError(
                    f"{path.name}: bad parent record at line {lineno}"
                ) from None
    return np.array(out, dtype=np.int64)


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(paths, base_dir) -> dict:
    """Map each artifact path (relative to base_dir) to its content hash."""
    base = Path(base_dir)
    entries = {}
    for p in paths:
        rel = Path(p).relative_to(base).as_posix()
        entries[rel] = sha256_file(p)
    return {"artifacts": dict(sorted(entries.items()))}
