"""Reverse p-maximin orderings and geometric candidate sets.

The ordering is built backwards: the last position is seeded, and every
earlier position takes the point whose p-th smallest distance to the
already-placed points is largest.  That distance is recorded as the point's
length scale; the final ``p`` positions keep an infinite sentinel.

All tie-breaks resolve toward the smallest raw point index, so identical
inputs produce identical orderings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def euclidean_distances(points, x):
    """Distances from each row of ``points`` to the single point ``x``.

    Canonical sqrt-of-sum-of-squares form so that vectorized and scalar
    evaluations agree bit for bit (argmax tie-breaks depend on it).
    """
    diff = points - x
    return np.sqrt((diff * diff).sum(axis=-1))


@dataclass
class Ordering:
    """A permutation of point indices with per-point maximin length scales.

    ``perm[pos]`` is the point placed at ordering position ``pos`` and
    ``scales[i]`` is point ``i``'s maximin distance at placement time.
    """

    perm: np.ndarray
    scales: np.ndarray
    p: int = 1
    rank: np.ndarray = field(init=False)

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=np.intp)
        self.scales = np.asarray(self.scales, dtype=float)
        n = len(self.perm)
        if sorted(self.perm.tolist()) != list(range(n)):
            raise ValueError("perm must be a permutation of 0..N-1")
        self.rank = np.empty(n, dtype=np.intp)
        self.rank[self.perm] = np.arange(n)

    def __len__(self):
        return len(self.perm)

    def position(self, i):
        """Ordering position of point ``i``."""
        return int(self.rank[i])

    def successors(self, i):
        """Points after ``i`` in the ordering, in position order."""
        return self.perm[self.rank[i] + 1 :]


def _default_seed(points):
    center = points.mean(axis=0)
    return int(np.argmin(euclidean_distances(points, center)))


def reverse_maximin(points, p=1, seed_index=None):
    """Reverse p-maximin ordering of a point set.

    Positions are filled from the back: the seed goes last, then each
    earlier position holds the point maximizing the p-th smallest distance
    to the points already placed (infinite while fewer than ``p`` are
    placed).  Runs in O(N^2 p) with vectorized distance updates.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ValueError("points must be a nonempty 2-d array")
    n = points.shape[0]
    if p < 1:
        raise ValueError("p must be at least 1")
    if p > n:
        raise ValueError(f"p={p} exceeds the number of points {n}")
    seed = _default_seed(points) if seed_index is None else int(seed_index)
    if not 0 <= seed < n:
        raise ValueError(f"seed index {seed} out of range")

    perm = np.empty(n, dtype=np.intp)
    scales = np.empty(n, dtype=float)
    chosen = np.zeros(n, dtype=bool)
    # p smallest distances from each point to the chosen set, row-sorted
    nearest = np.full((n, p), np.inf)

    perm[n - 1] = seed
    scales[seed] = np.inf
    chosen[seed] = True
    last = seed
    for pos in range(n - 2, -1, -1):
        d = euclidean_distances(points, points[last])
        if p == 1:
            np.minimum(nearest[:, 0], d, out=nearest[:, 0])
        else:
            stacked = np.concatenate([nearest, d[:, None]], axis=1)
            stacked.sort(axis=1)
            nearest = stacked[:, :p]
        key = nearest[:, p - 1].copy()
        key[chosen] = -np.inf
        nxt = int(np.argmax(key))  # first max = smallest raw index on ties
        scales[nxt] = nearest[nxt, p - 1]
        perm[pos] = nxt
        chosen[nxt] = True
        last = nxt
    return Ordering(perm=perm, scales=scales, p=p)


def rho_ball_candidates(ordering, points, i, rho):
    """Successors of ``i`` within distance ``rho * scale(i)``.

    Returned in ordering-position order; an infinite scale admits every
    successor.
    """
    points = np.asarray(points, dtype=float)
    succ = ordering.successors(i)
    if len(succ) == 0:
        return succ
    radius = rho * ordering.scales[i]
    if np.isinf(radius):
        return succ
    d = euclidean_distances(points[succ], points[i])
    return succ[d <= radius]


def knn_candidates(ordering, points, i, k):
    """The ``k`` nearest successors of ``i``; distance ties prefer the
    smaller raw index.  Returned in ordering-position order."""
    if k < 1:
        raise ValueError("k must be at least 1")
    points = np.asarray(points, dtype=float)
    succ = ordering.successors(i)
    if len(succ) <= k:
        return succ
    d = euclidean_distances(points[succ], points[i])
    picked = succ[np.lexsort((succ, d))[:k]]
    return picked[np.argsort(ordering.rank[picked])]
