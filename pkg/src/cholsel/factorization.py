"""Sparse inverse Cholesky factors with per-column optimal entries.

A factor ``L`` lives in ordering-permuted coordinates: column ``i`` of ``L``
is owned by the point at ordering position ``i`` and may only have entries
at later positions.  For a fixed sparsity set the entries minimizing the
divergence from the true covariance have the closed form

    L[s, i] = inv(Theta[s, s]) e1 / sqrt(e1' inv(Theta[s, s]) e1)

with the owner first in ``s``; columns are independent, so the factorization
parallelizes trivially.  Sparsity sets come from geometric baselines
(distance balls, nearest neighbors) or from the greedy conditional selection
routines, optionally sharing one pattern per supernode.
"""

from __future__ import annotations

import heapq
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .exceptions import NotPositiveDefiniteError
from .kernels import KernelSource, MatrixSource, spd_cholesky
from .ordering import reverse_maximin, rho_ball_candidates, knn_candidates
from .selection import (
    ABORT_RTOL,
    OrderedCholesky,
    PartialCholesky,
    select_from_source_partial,
    select_from_source_single,
)

FACTOR_METHODS = ("rho_ball", "rho_ball_agg", "knn", "select", "select_agg")


@dataclass
class SparsityPattern:
    """Lower-triangular sparsity sets in ordering coordinates.

    ``columns[i]`` lists the positions allowed to be nonzero in column
    ``i``, starting with ``i`` itself and ascending.  Aggregated patterns
    additionally carry the supernode partition and each group's shared set.
    """

    columns: list
    groups: list | None = None
    group_sets: list | None = None

    def __post_init__(self):
        for i, col in enumerate(self.columns):
            col = np.asarray(col, dtype=np.intp)
            if len(col) == 0 or col[0] != i:
                raise ValueError(f"column {i} must start with its own position")
            if np.any(np.diff(col) <= 0):
                raise ValueError(f"column {i} positions must be ascending")
            self.columns[i] = col

    @property
    def n(self):
        return len(self.columns)

    @property
    def nnz(self):
        return int(sum(len(c) for c in self.columns))


@dataclass
class SparseFactor:
    """Column-compressed lower-triangular factor plus its permutation.

    ``matrix`` is in ordering coordinates; ``perm[pos]`` maps a position
    back to the original point index, so the factor of the unpermuted
    precision is obtained by scattering rows and columns through ``perm``.
    """

    matrix: sparse.csc_matrix
    perm: np.ndarray

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=np.intp)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("factor must be square")
        if self.matrix.shape[0] != len(self.perm):
            raise ValueError("permutation length must match the factor")

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def nnz(self):
        return int(self.matrix.nnz)

    def log_det(self):
        """Log-determinant of the factor (sum of log diagonal entries)."""
        return float(np.sum(np.log(self.matrix.diagonal())))

    def unpermuted(self):
        """The factor scattered back to original point coordinates."""
        n = self.n
        scatter = sparse.csc_matrix(
            (np.ones(n), (self.perm, np.arange(n))), shape=(n, n)
        )
        return scatter @ self.matrix @ scatter.T


def column_entries(spec, points, indices):
    """Optimal factor column over a sparsity set of point indices.

    ``indices`` holds the owner first; the returned values correspond to
    ``indices`` entrywise.
    """
    return _column_entries(KernelSource(spec, points), np.asarray(indices, np.intp))


def _column_entries(source, indices):
    theta = source.block(indices, indices)
    try:
        factor = cho_factor(theta, lower=True)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError("sparsity-set block is not positive "
                                       "definite") from err
    e1 = np.zeros(len(indices))
    e1[0] = 1.0
    z = cho_solve(factor, e1)
    if z[0] <= 0:
        raise NotPositiveDefiniteError("nonpositive pivot in column entries")
    return z / np.sqrt(z[0])


def aggregated_entries(spec, points, members, group_set):
    """Factor columns for every member of a supernode in one factorization.

    ``group_set`` is the shared sparsity set (point indices sorted by
    ordering position) and ``members`` the owners' offsets into it.  Each
    member's column spans the suffix of the set starting at the member, and
    equals what :func:`column_entries` would return for that suffix.
    """
    return _aggregated_entries(KernelSource(spec, points),
                               np.asarray(members, np.intp),
                               np.asarray(group_set, np.intp))


def _aggregated_entries(source, member_offsets, group_set):
    theta = source.block(group_set, group_set)
    # upper-triangular factor of the covariance: its inverse transpose is a
    # lower factor of the precision, whose columns are the desired entries
    rev = theta[::-1, ::-1]
    upper = spd_cholesky(rev, "aggregated sparsity block")[::-1, ::-1]
    rhs = np.zeros((len(group_set), len(member_offsets)))
    rhs[member_offsets, np.arange(len(member_offsets))] = 1.0
    sol = solve_triangular(upper.T, rhs, lower=True)
    return [sol[k:, c] for c, k in enumerate(member_offsets)]


def aggregate_supernodes(ordering, columns, lam):
    """Partition columns into supernodes by a sweep over the ordering.

    The first unaggregated position ``i`` collects the unaggregated members
    of its sparsity set whose length scale is within ``lam`` times its own;
    the sweep repeats until every column is grouped.
    """
    if lam < 1:
        raise ValueError("lam must be at least 1")
    n = len(columns)
    scale_at = ordering.scales[ordering.perm]
    done = np.zeros(n, dtype=bool)
    groups = []
    for i in range(n):
        if done[i]:
            continue
        limit = lam * scale_at[i]
        members = [int(j) for j in columns[i]
                   if not done[j] and scale_at[j] <= limit]
        done[members] = True
        groups.append(np.asarray(members, dtype=np.intp))
    return groups


@dataclass
class FactorResult:
    """A computed factor with its pattern, ordering, and phase timings."""

    factor: SparseFactor
    pattern: SparsityPattern
    ordering: object
    timings: dict = field(default_factory=dict)


def _map_jobs(fn, items, n_jobs):
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _base_pattern(ordering, points, rho):
    cols = []
    for i in range(len(ordering)):
        cand = rho_ball_candidates(ordering, points, int(ordering.perm[i]), rho)
        cols.append(np.concatenate([[i], np.sort(ordering.rank[cand])]))
    return cols


def _group_pattern_columns(members, group_set):
    """Per-member columns of a shared set: the suffix at each member."""
    columns = {}
    for m in members:
        start = int(np.searchsorted(group_set, m))
        columns[int(m)] = group_set[start:]
    return columns


def factorize(spec, points, method="select", *, rho=2.0, rho_s=2.0, k=None,
              lam=1.5, p=1, ordering=None, n_jobs=1):
    """Compute a sparse inverse Cholesky factor of a kernel matrix.

    Methods:

    - ``rho_ball``: all ordering successors within ``rho`` length scales.
    - ``knn``: nearest successors, sized per column to match ``rho_ball``
      (or a fixed ``k``).
    - ``select``: greedy conditional selection out of an enlarged ball of
      radius ``rho_s * rho`` length scales, sized to match ``rho_ball``.
    - ``rho_ball_agg`` / ``select_agg``: supernodal variants sharing one
      sparsity set per group (parameter ``lam``); ``select_agg`` selects
      with partial conditioning over the unmodified group candidates.

    Returns a :class:`FactorResult`; the factor lives in ordering-permuted
    coordinates with the permutation attached.
    """
    if method not in FACTOR_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {FACTOR_METHODS}")
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    source = KernelSource(spec, points)
    timings = {}

    t0 = time.perf_counter()
    if ordering is None:
        ordering = reverse_maximin(points, p=p)
    timings["ordering"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    base = _base_pattern(ordering, points, rho)
    rank, perm = ordering.rank, ordering.perm

    groups = None
    group_sets = None
    if method == "rho_ball":
        columns = base
    elif method == "knn":
        def knn_column(i):
            size = (len(base[i]) - 1) if k is None else k
            if size <= 0:
                return np.asarray([i], dtype=np.intp)
            cand = knn_candidates(ordering, points, int(perm[i]), size)
            return np.concatenate([[i], np.sort(rank[cand])])
        columns = _map_jobs(knn_column, range(n), n_jobs)
    elif method == "select":
        def select_column(i):
            budget = (len(base[i]) - 1) if k is None else k
            if budget <= 0:
                return np.asarray([i], dtype=np.intp)
            cand = np.sort(rho_ball_candidates(ordering, points, int(perm[i]),
                                               rho_s * rho))
            if len(cand) == 0:
                return np.asarray([i], dtype=np.intp)
            # one batched kernel evaluation per column, then cheap gathers;
            # candidates ascend by raw index so local ties break like global
            pts = np.concatenate([cand, [perm[i]]])
            local = MatrixSource(source.block(pts, pts))
            chosen = select_from_source_single(local, np.arange(len(cand)),
                                               len(cand), budget)
            return np.concatenate([[i], np.sort(rank[cand[chosen]])])
        columns = _map_jobs(select_column, range(n), n_jobs)
    else:  # aggregated methods
        groups = aggregate_supernodes(ordering, base, lam)
        if method == "rho_ball_agg":
            def group_set_for(g):
                return np.unique(np.concatenate([base[i] for i in g]))
            group_sets = _map_jobs(group_set_for, groups, n_jobs)
        else:  # select_agg
            def group_set_for(g):
                base_size = len(np.unique(np.concatenate([base[i] for i in g])))
                budget = (base_size - len(g)) if k is None else k * len(g)
                cand_pos = np.unique(np.concatenate(
                    [rank[rho_ball_candidates(ordering, points, int(perm[i]),
                                              rho_s * rho)]
                     for i in g] + [np.asarray(g, dtype=np.intp)]))
                cand_pos = np.setdiff1d(cand_pos, g, assume_unique=True)
                if budget <= 0 or len(cand_pos) == 0:
                    return np.asarray(sorted(g), dtype=np.intp)
                cand_pos = cand_pos[np.argsort(perm[cand_pos])]
                pts = np.concatenate([cand_pos, g])
                local = MatrixSource(source.block(perm[pts], perm[pts]))
                nc = len(cand_pos)
                chosen = select_from_source_partial(
                    local, np.arange(nc), nc + np.arange(len(g)),
                    pts.astype(float), budget)
                return np.unique(np.concatenate([g, cand_pos[chosen]]))
            group_sets = _map_jobs(group_set_for, groups, n_jobs)
        columns = [None] * n
        for g, gset in zip(groups, group_sets):
            for m, col in _group_pattern_columns(g, gset).items():
                columns[m] = col
    pattern = SparsityPattern(columns=list(columns), groups=groups,
                              group_sets=group_sets)
    timings["selection"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if groups is None:
        vals = _map_jobs(
            lambda col: _column_entries(source, perm[col]), pattern.columns,
            n_jobs)
    else:
        vals = [None] * n
        def group_values(pair):
            g, gset = pair
            offs = np.searchsorted(gset, g)
            return _aggregated_entries(source, offs, perm[gset])
        per_group = _map_jobs(group_values, list(zip(groups, group_sets)),
                              n_jobs)
        for g, cols in zip(groups, per_group):
            for m, v in zip(g, cols):
                vals[int(m)] = v
    rows = np.concatenate(pattern.columns)
    cols = np.repeat(np.arange(n), [len(c) for c in pattern.columns])
    data = np.concatenate(vals)
    factor = SparseFactor(
        matrix=sparse.csc_matrix((data, (rows, cols)), shape=(n, n)),
        perm=perm.copy(),
    )
    timings["entries"] = time.perf_counter() - t0
    return FactorResult(factor=factor, pattern=pattern, ordering=ordering,
                        timings=timings)


class _ColumnState:
    """Per-column selection state for the shared allocation queue."""

    def __init__(self, source, target, cand_points):
        self.n = len(cand_points)
        pts = np.concatenate([cand_points, [target]])
        self.pc = PartialCholesky(source, pts, self.n)
        self.cov = source.block(pts, np.asarray([target]))[:, 0]
        self.active = np.ones(self.n, dtype=bool)

    def keys(self):
        """Squared conditional correlation with the target per candidate."""
        var = self.pc.cond_var[: self.n]
        tvar = self.pc.cond_var[self.n]
        elig = self.active & (var > ABORT_RTOL * self.pc._diag0[: self.n])
        out = np.full(self.n, -np.inf)
        if tvar > 0:
            ok = np.flatnonzero(elig)
            out[ok] = self.cov[ok] ** 2 / (var[ok] * tvar)
        return out

    def apply(self, local_j):
        u = self.pc.append(local_j)
        self.cov = self.cov - u * u[self.n]
        self.active[local_j] = False


class _GroupState:
    """Per-supernode selection state for the shared allocation queue."""

    def __init__(self, source, member_points, cand_points, positions, capacity):
        self.m = len(member_points)
        self.n = len(cand_points)
        pts = np.concatenate([cand_points, member_points])
        self.oc = OrderedCholesky(source, pts, positions, capacity + self.m)
        self.targets = list(range(self.n, self.n + self.m))
        for t in self.targets:
            self.oc.insert(t)
        self.active = np.ones(self.n, dtype=bool)

    def keys(self):
        """Exact objective decrease per candidate (positive is better)."""
        base = self.oc.target_objective(self.targets)
        out = np.full(self.n, -np.inf)
        for j in np.flatnonzero(self.active):
            s = self.oc.score(j, self.targets)
            if np.isfinite(s):
                out[j] = base - s
        return out

    def apply(self, local_j):
        self.oc.insert(local_j)
        self.active[local_j] = False


def global_allocate(spec, points, ordering, candidate_sets, budget,
                    groups=None):
    """Distribute a total nonzero budget with one queue over all columns.

    Every column starts with its diagonal.  A max-priority queue holds every
    (column, candidate) pair keyed by its exact divergence decrease: squared
    conditional correlation for single columns, the drop in summed log
    target variance for supernodes.  Pops apply to the owning column, whose
    remaining keys are refreshed eagerly; other columns are untouched.
    """
    points = np.asarray(points, dtype=float)
    n = len(ordering)
    if budget < n:
        raise ValueError("budget must cover the diagonal (at least one entry "
                         "per column)")
    source = KernelSource(spec, points)
    perm, rank = ordering.perm, ordering.rank

    if groups is None:
        states, owners = {}, list(range(n))
        cand_of = {}
        for i in owners:
            cand = np.asarray(candidate_sets[i], dtype=np.intp)
            cand_of[i] = cand
            if len(cand):
                states[i] = _ColumnState(source, int(perm[i]), perm[cand])
        selected = {i: [] for i in owners}
        cost = {i: np.ones(len(cand_of[i]), dtype=int) for i in owners}
    else:
        states, owners, cand_of, selected, cost = {}, [], {}, {}, {}
        for gi, g in enumerate(groups):
            g = np.asarray(g, dtype=np.intp)
            cand = np.asarray(candidate_sets[gi], dtype=np.intp)
            owners.append(gi)
            cand_of[gi] = cand
            selected[gi] = []
            # a candidate enters every member column it succeeds
            cost[gi] = np.array([int(np.sum(g <= c)) for c in cand], dtype=int)
            if len(cand):
                positions = np.concatenate([cand, g]).astype(float)
                states[gi] = _GroupState(source, perm[g], perm[cand],
                                         positions, len(cand))

    version = {i: 0 for i in owners}
    heap = []
    for i in owners:
        if i not in states:
            continue
        for j, key in enumerate(states[i].keys()):
            if np.isfinite(key):
                heapq.heappush(heap, (-key, i, j, 0))

    if groups is None:
        total = n
    else:
        # member-member entries are mandatory in a shared group set
        total = int(sum(len(g) * (len(g) + 1) // 2 for g in groups))
    if total > budget:
        raise ValueError("budget cannot cover the mandatory group entries")
    while heap and total < budget:
        negkey, i, j, ver = heapq.heappop(heap)
        if ver != version[i] or not states[i].active[j]:
            continue
        if total + cost[i][j] > budget:
            states[i].active[j] = False  # cannot afford this entry
            continue
        states[i].apply(j)
        selected[i].append(int(cand_of[i][j]))
        total += int(cost[i][j])
        version[i] += 1
        for jj, key in enumerate(states[i].keys()):
            if np.isfinite(key):
                heapq.heappush(heap, (-key, i, jj, version[i]))

    if groups is None:
        columns = [np.concatenate([[i], np.sort(np.asarray(sel, dtype=np.intp))])
                   if sel else np.asarray([i], dtype=np.intp)
                   for i, sel in selected.items()]
        return SparsityPattern(columns=columns)
    group_sets = []
    columns = [None] * n
    for gi, g in enumerate(groups):
        gset = np.unique(np.concatenate([np.asarray(g, dtype=np.intp),
                                         np.asarray(selected[gi], dtype=np.intp)]))
        group_sets.append(gset)
        for m, col in _group_pattern_columns(np.asarray(g, np.intp), gset).items():
            columns[m] = col
    return SparsityPattern(columns=columns, groups=list(groups),
                           group_sets=group_sets)


def entries_for_pattern(spec, points, ordering, pattern, n_jobs=1):
    """Factor values for an existing pattern (aggregated when it has groups)."""
    source = KernelSource(spec, points)
    n = pattern.n
    perm = ordering.perm
    if pattern.groups is None:
        vals = _map_jobs(lambda col: _column_entries(source, perm[col]),
                         pattern.columns, n_jobs)
    else:
        vals = [None] * n
        for g, gset in zip(pattern.groups, pattern.group_sets):
            offs = np.searchsorted(gset, g)
            for m, v in zip(g, _aggregated_entries(source, offs, perm[gset])):
                vals[int(m)] = v
    rows = np.concatenate(pattern.columns)
    cols = np.repeat(np.arange(n), [len(c) for c in pattern.columns])
    return SparseFactor(
        matrix=sparse.csc_matrix((np.concatenate(vals), (rows, cols)),
                                 shape=(n, n)),
        perm=perm.copy(),
    )


def save_factor(factor, path, perm_path=None):
    """Write a factor as text triplets: header ``N nnz``, lines
    ``row col value`` (17 significant digits), plus a permutation file."""
    coo = factor.matrix.tocoo()
    order = np.lexsort((coo.row, coo.col))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{factor.n} {factor.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.16e}\n")
    perm_path = perm_path or f"{path}.perm"
    with open(perm_path, "w", encoding="ascii") as fh:
        for idx in factor.perm:
            fh.write(f"{idx}\n")


def load_factor(path, perm_path=None):
    """Read a factor written by :func:`save_factor`."""
    with open(path, encoding="ascii") as fh:
        header = fh.readline().split()
        n, nnz = int(header[0]), int(header[1])
        rows = np.empty(nnz, dtype=np.intp)
        cols = np.empty(nnz, dtype=np.intp)
        data = np.empty(nnz, dtype=float)
        for t in range(nnz):
            r, c, v = fh.readline().split()
            rows[t], cols[t], data[t] = int(r), int(c), float(v)
    perm_path = perm_path or f"{path}.perm"
    perm = np.loadtxt(perm_path, dtype=np.intp, ndmin=1)
    return SparseFactor(
        matrix=sparse.csc_matrix((data, (rows, cols)), shape=(n, n)),
        perm=perm,
    )
