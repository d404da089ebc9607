"""Small input-validation helpers shared across modules.

These mirror the sklearn ``check_*`` idiom: validate, normalize dtype,
and raise with a message naming the offending argument.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DataError


def check_probability(value: float, name: str) -> float:
    """Require a probability strictly inside (0, 1)."""
    value = float(value)
    if not np.isfinite(value) or not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {value!r}")
    return value


def check_mark(mark, n_words: int | None = None) -> np.ndarray:
    """Coerce a word-presence vector to a binary uint8 array."""
    arr = np.asarray(mark)
    if arr.ndim != 1:
        raise ValueError(f"mark must be one-dimensional, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mark entries must be 0 or 1")
    if n_words is not None and arr.shape[0] != n_words:
        raise ValueError(f"mark has length {arr.shape[0]}, expected {n_words}")
    return arr.astype(np.uint8)


def check_sorted_times(times: np.ndarray, name: str = "times") -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.isfinite(times).all():
        raise DataError(f"{name} contains non-finite values")
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise DataError(f"{name} must be nondecreasing")
    return times


def check_node_indices(nodes: np.ndarray, n_nodes: int, name: str = "nodes") -> np.ndarray:
    nodes = np.asarray(nodes)
    if nodes.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    nodes = nodes.astype(np.int64)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= n_nodes):
        raise DataError(f"{name} must lie in [0, {n_nodes}), got range "
                        f"[{nodes.min()}, {nodes.max()}]")
    return nodes


def check_square_matrix(mat, n: int, name: str, nonneg: bool = False) -> np.ndarray:
    arr = np.asarray(mat, dtype=np.float64)
    if arr.shape != (n, n):
        raise ValueError(f"{name} must have shape ({n}, {n}), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    if nonneg and (arr < 0).any():
        raise ValueError(f"{name} must be elementwise nonnegative")
    return arr
