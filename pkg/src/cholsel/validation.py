"""Input validation helpers shared by the estimator layer and the CLI."""

from __future__ import annotations

import numpy as np


def check_points(X, name="X", min_points=1):
    """Coerce to a finite float64 2-d coordinate array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array of point coordinates")
    if X.shape[0] < min_points:
        raise ValueError(f"{name} needs at least {min_points} point(s)")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return X


def check_no_duplicates(X, name="X"):
    """Reject exact duplicate coordinate rows (they degenerate selection)."""
    _, counts = np.unique(X, axis=0, return_counts=True)
    dupes = int(np.sum(counts - 1))
    if dupes:
        raise ValueError(f"{name} contains {dupes} exact duplicate point(s); "
                         "deduplicate before ordering or selection")
    return X


def drop_duplicates(X, name="X"):
    """Remove exact duplicate rows, keeping first occurrences in order.

    Returns the filtered array and the number of rows removed.
    """
    _, first = np.unique(X, axis=0, return_index=True)
    keep = np.sort(first)
    removed = X.shape[0] - len(keep)
    return X[keep], removed


def check_consistent_length(X, y, name="y"):
    y = np.asarray(y, dtype=float)
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"{name} must have one row per point "
                         f"({y.shape[0]} != {X.shape[0]})")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    return y
